use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::GmmError;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Lower Cholesky factor and log-normalizer of one Gaussian, for repeated
/// density evaluation.
#[derive(Debug, Clone)]
pub(crate) struct GaussianEval {
    pub mean: DVector<f64>,
    pub chol_l: DMatrix<f64>,
    /// `−½ (d log 2π + log |Σ|)`
    pub log_norm: f64,
}

impl GaussianEval {
    pub fn new(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Option<Self> {
        let chol = cov.clone().cholesky()?;
        let l = chol.l();
        let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let d = mean.len() as f64;
        Some(Self {
            mean: mean.clone(),
            chol_l: l,
            log_norm: -0.5 * (d * (2.0 * PI).ln() + log_det),
        })
    }

    /// Squared Mahalanobis distance; `scratch` is reused across calls.
    pub fn mahalanobis2(&self, x: &[f64], scratch: &mut Vec<f64>) -> f64 {
        let n = self.mean.len();
        scratch.clear();
        scratch.resize(n, 0.0);
        let mut q = 0.0;
        for i in 0..n {
            let mut s = x[i] - self.mean[i];
            for j in 0..i {
                s -= self.chol_l[(i, j)] * scratch[j];
            }
            scratch[i] = s / self.chol_l[(i, i)];
            q += scratch[i] * scratch[i];
        }
        q
    }

    pub fn log_pdf(&self, x: &[f64], scratch: &mut Vec<f64>) -> f64 {
        self.log_norm - 0.5 * self.mahalanobis2(x, scratch)
    }
}

/// Gaussian mixture over the joint input/output space.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub components: Vec<GaussianComponent>,
    pub input_dims: Vec<usize>,
    pub output_dims: Vec<usize>,
    /// Per input dimension, the `(min, max)` seen in training.
    pub input_support: Option<Vec<(f64, f64)>>,
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl GaussianMixture {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components.first().map_or(0, |c| c.mean.len())
    }

    pub fn validate(&self) -> Result<(), GmmError> {
        if self.components.is_empty() {
            return Err(GmmError::InvalidModel("no components".into()));
        }
        let d = self.dim();
        let mut total = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(GmmError::InvalidModel(format!(
                    "component {i}: weight {} outside (0, 1]",
                    c.weight
                )));
            }
            if c.mean.len() != d || c.covariance.shape() != (d, d) {
                return Err(GmmError::InvalidModel(format!(
                    "component {i}: dimension mismatch"
                )));
            }
            let asym = (&c.covariance - c.covariance.transpose()).amax();
            if asym > 1e-12 * (1.0 + c.covariance.amax())
                || c.covariance.clone().cholesky().is_none()
            {
                return Err(GmmError::InvalidModel(format!(
                    "component {i}: covariance not SPD"
                )));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(GmmError::InvalidModel(format!("weights sum to {total}")));
        }
        let mut dims: Vec<usize> = self
            .input_dims
            .iter()
            .chain(&self.output_dims)
            .copied()
            .collect();
        dims.sort_unstable();
        dims.dedup();
        if self.input_dims.is_empty()
            || dims.len() != self.input_dims.len() + self.output_dims.len()
            || dims.iter().any(|&i| i >= d)
        {
            return Err(GmmError::InvalidModel(
                "input/output index sets invalid".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn evaluators(&self) -> Result<Vec<GaussianEval>, GmmError> {
        self.components
            .iter()
            .enumerate()
            .map(|(i, c)| {
                GaussianEval::new(&c.mean, &c.covariance).ok_or_else(|| {
                    GmmError::InvalidModel(format!("component {i}: covariance not SPD"))
                })
            })
            .collect()
    }

    /// Total log-likelihood of row-wise data.
    pub fn log_likelihood(&self, data: &DMatrix<f64>) -> Result<f64, GmmError> {
        let evals = self.evaluators()?;
        let logw: Vec<f64> = self.components.iter().map(|c| c.weight.ln()).collect();
        let mut row = vec![0.0; data.ncols()];
        let mut terms = vec![0.0; self.k()];
        let mut scratch = Vec::new();
        let mut total = 0.0;
        for r in 0..data.nrows() {
            for c in 0..data.ncols() {
                row[c] = data[(r, c)];
            }
            for (k, e) in evals.iter().enumerate() {
                terms[k] = logw[k] + e.log_pdf(&row, &mut scratch);
            }
            total += log_sum_exp(&terms);
        }
        Ok(total)
    }

    pub fn to_json(&self) -> Result<String, GmmError> {
        Ok(serde_json::to_string_pretty(&MixtureFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self, GmmError> {
        let f: MixtureFile = serde_json::from_str(s)?;
        let m = f.into_mixture()?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), GmmError> {
        std::fs::write(path, self.to_json()?).map_err(|e| GmmError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, GmmError> {
        let s = std::fs::read_to_string(path).map_err(|e| GmmError::io(path, e))?;
        Self::from_json(&s).map_err(|e| e.with_path(path))
    }
}

/// On-disk layout: covariances are stored row-major.
#[derive(Serialize, Deserialize)]
struct MixtureFile {
    dim: usize,
    input_dims: Vec<usize>,
    output_dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input_support: Option<Vec<(f64, f64)>>,
    components: Vec<ComponentFile>,
}

#[derive(Serialize, Deserialize)]
struct ComponentFile {
    weight: f64,
    mean: Vec<f64>,
    covariance: Vec<f64>,
}

impl From<&GaussianMixture> for MixtureFile {
    fn from(m: &GaussianMixture) -> Self {
        let d = m.dim();
        Self {
            dim: d,
            input_dims: m.input_dims.clone(),
            output_dims: m.output_dims.clone(),
            input_support: m.input_support.clone(),
            components: m
                .components
                .iter()
                .map(|c| ComponentFile {
                    weight: c.weight,
                    mean: c.mean.iter().copied().collect(),
                    covariance: (0..d)
                        .flat_map(|r| (0..d).map(move |col| (r, col)))
                        .map(|ix| c.covariance[ix])
                        .collect(),
                })
                .collect(),
        }
    }
}

impl MixtureFile {
    fn into_mixture(self) -> Result<GaussianMixture, GmmError> {
        let d = self.dim;
        let mut components = Vec::with_capacity(self.components.len());
        for (i, c) in self.components.into_iter().enumerate() {
            if c.mean.len() != d || c.covariance.len() != d * d {
                return Err(GmmError::InvalidModel(format!(
                    "component {i}: expected dimension {d}"
                )));
            }
            components.push(GaussianComponent {
                weight: c.weight,
                mean: DVector::from_vec(c.mean),
                covariance: DMatrix::from_row_slice(d, d, &c.covariance),
            });
        }
        Ok(GaussianMixture {
            components,
            input_dims: self.input_dims,
            output_dims: self.output_dims,
            input_support: self.input_support,
        })
    }
}
