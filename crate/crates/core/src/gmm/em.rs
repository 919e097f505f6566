//! Expectation-maximization for full-covariance Gaussian mixtures.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::DemoDataset;
use super::mixture::{log_sum_exp, GaussianComponent, GaussianEval, GaussianMixture};
use super::GmmError;
use crate::linalg::symmetric_eigen;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop when the mean per-row log-likelihood gain drops below this.
    pub tol: f64,
    /// Smallest allowed covariance eigenvalue.
    pub reg_floor: f64,
    pub seed: u64,
    /// Initial mean perturbation, in units of each dimension's spread.
    pub jitter: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-8,
            reg_floor: 1e-6,
            seed: 0,
            jitter: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Restart {
    /// Iteration whose M-step re-seeded the component.
    pub iteration: usize,
    pub component: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmReport {
    /// Total log-likelihood of the parameters at the start of each iteration.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
    pub restarts: Vec<Restart>,
}

impl EmReport {
    pub fn iterations(&self) -> usize {
        self.log_likelihood.len()
    }

    /// Largest likelihood drop between consecutive iterations, ignoring the
    /// steps right after a component restart. Zero for a monotone trace.
    pub fn max_decrease(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 1..self.log_likelihood.len() {
            if self.restarts.iter().any(|r| r.iteration + 1 == i) {
                continue;
            }
            worst = worst.max(self.log_likelihood[i - 1] - self.log_likelihood[i]);
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub mixture: GaussianMixture,
    pub report: EmReport,
}

/// Fit on the `[t, x, ẋ, f]` rows of a dataset.
pub fn fit_em(data: &DemoDataset, k: usize, config: &EmConfig) -> Result<FitResult, GmmError> {
    data.validate(1)?;
    fit_em_rows(&data.to_matrix(), k, config)
}

/// Fit on arbitrary rows; column 0 is the regression input.
pub fn fit_em_rows(
    data: &DMatrix<f64>,
    k: usize,
    config: &EmConfig,
) -> Result<FitResult, GmmError> {
    let n = data.nrows();
    let d = data.ncols();
    if k == 0 {
        return Err(GmmError::InvalidK(k));
    }
    if n < 10 * k {
        return Err(GmmError::TooFewRows {
            rows: n,
            needed: 10 * k,
        });
    }
    if d < 2 {
        return Err(GmmError::Dataset(
            "need an input column and at least one output column".into(),
        ));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(GmmError::Dataset(
            "non-finite value in training data".into(),
        ));
    }
    if !(config.reg_floor > 0.0) || !(config.tol >= 0.0) || config.max_iters == 0 {
        return Err(GmmError::Config(
            "EM needs reg_floor > 0, tol ≥ 0, max_iters ≥ 1".into(),
        ));
    }

    let rows: Vec<Vec<f64>> = (0..n)
        .map(|r| data.row(r).iter().copied().collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let global = weighted_moments(&rows, &vec![1.0; n]);
    let mut comps = init_time_bins(&rows, k, config, &global, &mut rng);

    let mut report = EmReport {
        log_likelihood: Vec::new(),
        converged: false,
        restarts: Vec::new(),
    };
    let mut resp = vec![0.0; n * k];
    for iter in 0..config.max_iters {
        let ll = e_step(&rows, &comps, &mut resp)?;
        if let Some(&prev) = report.log_likelihood.last() {
            report.log_likelihood.push(ll);
            let just_restarted = report
                .restarts
                .last()
                .map_or(false, |r| r.iteration + 1 == iter);
            if !just_restarted && ll - prev <= config.tol * n as f64 {
                report.converged = true;
                break;
            }
        } else {
            report.log_likelihood.push(ll);
        }
        if iter + 1 == config.max_iters {
            break;
        }
        m_step(
            &rows,
            &resp,
            &mut comps,
            config,
            &global,
            iter,
            &mut report,
            &mut rng,
        );
    }
    if !report.converged {
        log::warn!(
            "EM did not converge in {} iterations (K = {k}, seed = {})",
            config.max_iters,
            config.seed
        );
    }

    let support = (0..1)
        .map(|c| {
            let col = data.column(c);
            (col.min(), col.max())
        })
        .collect();
    let mixture = GaussianMixture {
        components: comps,
        input_dims: vec![0],
        output_dims: (1..d).collect(),
        input_support: Some(support),
    };
    mixture.validate()?;
    Ok(FitResult { mixture, report })
}

/// Weighted mean and (biased) covariance.
fn weighted_moments(rows: &[Vec<f64>], w: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let d = rows[0].len();
    let total: f64 = w.iter().sum();
    let mut mean = DVector::zeros(d);
    for (r, &wi) in rows.iter().zip(w) {
        for j in 0..d {
            mean[j] += wi * r[j];
        }
    }
    mean /= total;
    let mut cov = DMatrix::zeros(d, d);
    for (r, &wi) in rows.iter().zip(w) {
        if wi == 0.0 {
            continue;
        }
        for a in 0..d {
            let da = r[a] - mean[a];
            for b in 0..=a {
                cov[(a, b)] += wi * da * (r[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            cov[(b, a)] = cov[(a, b)];
        }
    }
    (mean, cov / total)
}

/// Closest matrix (in the ML sense) with every eigenvalue ≥ `floor`.
fn floor_eigenvalues(cov: DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let (values, v) = symmetric_eigen(&cov);
    if values.min() >= floor {
        return cov;
    }
    // lift only the deficient directions so the rest of cov is kept exactly
    // aim a rounding margin above the floor
    let target = floor + 64.0 * f64::EPSILON * crate::linalg::max_abs(&cov);
    let lift = values.map(|s| if s < floor { target - s } else { 0.0 });
    let out = cov + &v * DMatrix::from_diagonal(&lift) * v.transpose();
    (&out + out.transpose()) * 0.5
}

fn init_time_bins(
    rows: &[Vec<f64>],
    k: usize,
    config: &EmConfig,
    global: &(DVector<f64>, DMatrix<f64>),
    rng: &mut ChaCha8Rng,
) -> Vec<GaussianComponent> {
    let n = rows.len();
    let d = rows[0].len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| rows[a][0].total_cmp(&rows[b][0]).then(a.cmp(&b)));
    let spread: Vec<f64> = (0..d).map(|j| global.1[(j, j)].sqrt()).collect();
    let mut comps = Vec::with_capacity(k);
    for b in 0..k {
        let lo = b * n / k;
        let hi = (b + 1) * n / k;
        let bin: Vec<Vec<f64>> = order[lo..hi].iter().map(|&i| rows[i].clone()).collect();
        let (mut mean, cov) = weighted_moments(&bin, &vec![1.0; bin.len()]);
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            mean[j] += config.jitter * spread[j] * z;
        }
        comps.push(GaussianComponent {
            weight: (hi - lo) as f64 / n as f64,
            mean,
            covariance: floor_eigenvalues(cov, config.reg_floor),
        });
    }
    normalize_weights(&mut comps);
    comps
}

fn normalize_weights(comps: &mut [GaussianComponent]) {
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    for c in comps.iter_mut() {
        c.weight /= total;
    }
}

/// Responsibilities into `resp` (row-major n×k); returns the total log-likelihood.
fn e_step(
    rows: &[Vec<f64>],
    comps: &[GaussianComponent],
    resp: &mut [f64],
) -> Result<f64, GmmError> {
    let k = comps.len();
    let evals: Vec<GaussianEval> = comps
        .iter()
        .enumerate()
        .map(|(i, c)| {
            GaussianEval::new(&c.mean, &c.covariance).ok_or_else(|| {
                GmmError::InvalidModel(format!("component {i}: covariance lost definiteness"))
            })
        })
        .collect::<Result<_, _>>()?;
    let logw: Vec<f64> = comps.iter().map(|c| c.weight.ln()).collect();
    let mut scratch = Vec::new();
    let mut total = 0.0;
    for (r, row) in rows.iter().enumerate() {
        let slot = &mut resp[r * k..(r + 1) * k];
        for j in 0..k {
            slot[j] = logw[j] + evals[j].log_pdf(row, &mut scratch);
        }
        let lse = log_sum_exp(slot);
        total += lse;
        for v in slot.iter_mut() {
            *v = (*v - lse).exp();
        }
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn m_step(
    rows: &[Vec<f64>],
    resp: &[f64],
    comps: &mut [GaussianComponent],
    config: &EmConfig,
    global: &(DVector<f64>, DMatrix<f64>),
    iter: usize,
    report: &mut EmReport,
    rng: &mut ChaCha8Rng,
) {
    let n = rows.len();
    let k = comps.len();
    // responsibility mass below this is treated as underflowed
    let min_mass = 1e-10;
    for j in 0..k {
        let w: Vec<f64> = (0..n).map(|r| resp[r * k + j]).collect();
        let mass: f64 = w.iter().sum();
        if !(mass > min_mass) {
            let pick = rng.gen_range(0..n);
            comps[j] = GaussianComponent {
                weight: 1.0 / k as f64,
                mean: DVector::from_column_slice(&rows[pick]),
                covariance: floor_eigenvalues(&global.1 / (k * k) as f64, config.reg_floor),
            };
            report.restarts.push(Restart {
                iteration: iter,
                component: j,
            });
            log::warn!("EM: component {j} lost all responsibility at iteration {iter}, restarted from row {pick}");
            continue;
        }
        let (mean, cov) = weighted_moments(rows, &w);
        comps[j] = GaussianComponent {
            weight: mass / n as f64,
            mean,
            covariance: floor_eigenvalues(cov, config.reg_floor),
        };
    }
    normalize_weights(comps);
}
