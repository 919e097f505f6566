//! Gaussian mixture regression: condition the joint mixture on its inputs.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::mixture::{GaussianEval, GaussianMixture};
use super::GmmError;

/// Per-component pieces of the conditional `p(out | in)`.
#[derive(Debug, Clone)]
struct ConditionalPart {
    log_weight: f64,
    input: GaussianEval,
    mu_in: DVector<f64>,
    mu_out: DVector<f64>,
    /// `Σ_OI Σ_II⁻¹`
    gain: DMatrix<f64>,
    /// `Σ_OO − Σ_OI Σ_II⁻¹ Σ_IO`
    cov: DMatrix<f64>,
}

/// Conditioning result for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditional {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Mixing weights `h_k(input)`.
    pub weights: Vec<f64>,
    /// Every input likelihood underflowed; the nearest component (Mahalanobis
    /// distance on the input) was used alone.
    pub underflow: bool,
}

/// Regression model precomputed from a mixture.
#[derive(Debug, Clone)]
pub struct Gmr {
    parts: Vec<ConditionalPart>,
    n_in: usize,
    n_out: usize,
    support: Option<Vec<(f64, f64)>>,
}

fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

fn select_vec(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |r, _| v[idx[r]])
}

impl Gmr {
    pub fn new(model: &GaussianMixture) -> Result<Self, GmmError> {
        model.validate()?;
        let (i, o) = (&model.input_dims, &model.output_dims);
        let mut parts = Vec::with_capacity(model.k());
        for (k, c) in model.components.iter().enumerate() {
            let s_ii = select(&c.covariance, i, i);
            let s_oi = select(&c.covariance, o, i);
            let s_oo = select(&c.covariance, o, o);
            let mu_in = select_vec(&c.mean, i);
            let input = GaussianEval::new(&mu_in, &s_ii).ok_or_else(|| {
                GmmError::InvalidModel(format!("component {k}: input covariance not SPD"))
            })?;
            let chol = s_ii.cholesky().expect("checked by GaussianEval");
            // Σ_OI Σ_II⁻¹ = (Σ_II⁻¹ Σ_IO)ᵀ
            let gain = chol.solve(&s_oi.transpose()).transpose();
            let cov = &s_oo - &gain * s_oi.transpose();
            parts.push(ConditionalPart {
                log_weight: c.weight.ln(),
                input,
                mu_in,
                mu_out: select_vec(&c.mean, o),
                gain,
                cov: (&cov + cov.transpose()) * 0.5,
            });
        }
        Ok(Self {
            parts,
            n_in: i.len(),
            n_out: o.len(),
            support: model.input_support.clone(),
        })
    }

    pub fn output_dim(&self) -> usize {
        self.n_out
    }

    /// True when `input` lies outside the training support.
    pub fn extrapolates(&self, input: &[f64]) -> bool {
        match &self.support {
            Some(s) => input.iter().zip(s).any(|(v, (lo, hi))| v < lo || v > hi),
            None => false,
        }
    }

    pub fn condition(&self, input: &[f64]) -> Result<Conditional, GmmError> {
        if input.len() != self.n_in || input.iter().any(|v| !v.is_finite()) {
            return Err(GmmError::Input(format!(
                "expected {} finite input value(s)",
                self.n_in
            )));
        }
        let mut scratch = Vec::new();
        let logs: Vec<f64> = self
            .parts
            .iter()
            .map(|p| p.log_weight + p.input.log_pdf(input, &mut scratch))
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // the plain-space likelihoods would all be zero below this
        let underflow = !(max.exp() > 0.0);
        let weights: Vec<f64> = if underflow {
            let nearest = self
                .parts
                .iter()
                .map(|p| p.input.mahalanobis2(input, &mut scratch))
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(k, _)| k)
                .unwrap_or(0);
            (0..self.parts.len())
                .map(|k| if k == nearest { 1.0 } else { 0.0 })
                .collect()
        } else {
            let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|v| v / s).collect()
        };

        let x = DVector::from_column_slice(input);
        let mut mean = DVector::zeros(self.n_out);
        let mut second = DMatrix::zeros(self.n_out, self.n_out);
        for (p, &h) in self.parts.iter().zip(&weights) {
            if h == 0.0 {
                continue;
            }
            let mu = &p.mu_out + &p.gain * (&x - &p.mu_in);
            second += h * (&p.cov + &mu * mu.transpose());
            mean += h * mu;
        }
        let cov = second - &mean * mean.transpose();
        Ok(Conditional {
            mean,
            covariance: (&cov + cov.transpose()) * 0.5,
            weights,
            underflow,
        })
    }
}

/// Condition a mixture on a scalar time input.
pub fn gmr_condition(model: &GaussianMixture, t: f64) -> Result<Conditional, GmmError> {
    Gmr::new(model)?.condition(&[t])
}

/// One time step of the learned reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceSample {
    pub t: f64,
    pub x_d: DVector<f64>,
    pub xdot_d: DVector<f64>,
    pub f_d: DVector<f64>,
    pub output_covariance: DMatrix<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ReferenceFlags {
    /// some grid points lie outside the training time span
    pub extrapolated: bool,
    /// adjacent positions differ by more than the configured step
    pub position_jump: bool,
    /// steps that needed the nearest-component fallback
    pub underflow_steps: usize,
}

#[derive(Debug, Clone)]
pub struct Reference {
    pub samples: Vec<ReferenceSample>,
    pub flags: ReferenceFlags,
}

impl Reference {
    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}

/// GMR along a time grid. Outputs are read as `[x, ẋ, f]` blocks of equal size.
pub fn generate_reference(
    model: &GaussianMixture,
    t_grid: &[f64],
    max_step: f64,
) -> Result<Reference, GmmError> {
    if t_grid.is_empty() {
        return Err(GmmError::Input("empty time grid".into()));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(GmmError::Input(
            "time grid must be strictly increasing".into(),
        ));
    }
    let gmr = Gmr::new(model)?;
    if gmr.n_in != 1 || gmr.n_out % 3 != 0 {
        return Err(GmmError::InvalidModel(
            "expected a time input and [x, ẋ, f] outputs".into(),
        ));
    }
    let m = gmr.n_out / 3;
    let mut flags = ReferenceFlags::default();
    let mut samples: Vec<ReferenceSample> = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let c = gmr.condition(&[t])?;
        flags.extrapolated |= gmr.extrapolates(&[t]);
        if c.underflow {
            flags.underflow_steps += 1;
        }
        let s = ReferenceSample {
            t,
            x_d: c.mean.rows(0, m).into_owned(),
            xdot_d: c.mean.rows(m, m).into_owned(),
            f_d: c.mean.rows(2 * m, m).into_owned(),
            output_covariance: c.covariance,
        };
        if let Some(prev) = samples.last() {
            if (&s.x_d - &prev.x_d).amax() > max_step {
                flags.position_jump = true;
            }
        }
        samples.push(s);
    }
    if flags.extrapolated {
        log::warn!("reference grid extends beyond the training time span");
    }
    if flags.position_jump {
        log::warn!("reference position jumps by more than {max_step} m between grid points");
    }
    Ok(Reference { samples, flags })
}
