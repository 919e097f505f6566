use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use vic_core::gmm::{
    fit_em_rows, gmr_condition, Demo, DemoDataset, DemoSample, EmConfig, GaussianComponent,
    GaussianMixture, Gmr,
};
use vic_core::linalg::min_eigenvalue;

/// Random SPD matrix `A Aᵀ + s I` from a flat list of entries.
fn spd(d: usize, entries: &[f64], shift: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |r, c| entries[(r * d + c) % entries.len()]);
    &a * a.transpose() + DMatrix::identity(d, d) * shift
}

fn mixture(means: &[Vec<f64>], covs: &[DMatrix<f64>], weights: &[f64]) -> GaussianMixture {
    let total: f64 = weights.iter().sum();
    let d = means[0].len();
    GaussianMixture {
        components: means
            .iter()
            .zip(covs)
            .zip(weights)
            .map(|((m, c), w)| GaussianComponent {
                weight: w / total,
                mean: DVector::from_column_slice(m),
                covariance: c.clone(),
            })
            .collect(),
        input_dims: vec![0],
        output_dims: (1..d).collect(),
        input_support: None,
    }
}

/// Scalar-input conditional written out with plain arithmetic.
fn oracle_condition(model: &GaussianMixture, t: f64) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let d = model.components[0].mean.len();
    let n_out = d - 1;
    let mut raw = Vec::new();
    let mut cond_means = Vec::new();
    let mut cond_covs = Vec::new();
    for c in &model.components {
        let (mu_t, s_tt) = (c.mean[0], c.covariance[(0, 0)]);
        let dens =
            (-(t - mu_t).powi(2) / (2.0 * s_tt)).exp() / (2.0 * std::f64::consts::PI * s_tt).sqrt();
        raw.push(c.weight * dens);
        let mean: Vec<f64> = (0..n_out)
            .map(|i| c.mean[i + 1] + c.covariance[(i + 1, 0)] / s_tt * (t - mu_t))
            .collect();
        let cov: Vec<Vec<f64>> = (0..n_out)
            .map(|i| {
                (0..n_out)
                    .map(|j| {
                        c.covariance[(i + 1, j + 1)]
                            - c.covariance[(i + 1, 0)] * c.covariance[(0, j + 1)] / s_tt
                    })
                    .collect()
            })
            .collect();
        cond_means.push(mean);
        cond_covs.push(cov);
    }
    let s: f64 = raw.iter().sum();
    let h: Vec<f64> = raw.iter().map(|v| v / s).collect();
    let mut mean = vec![0.0; n_out];
    for (k, m) in cond_means.iter().enumerate() {
        for i in 0..n_out {
            mean[i] += h[k] * m[i];
        }
    }
    let mut cov = vec![vec![0.0; n_out]; n_out];
    for k in 0..h.len() {
        for i in 0..n_out {
            for j in 0..n_out {
                cov[i][j] += h[k] * (cond_covs[k][i][j] + cond_means[k][i] * cond_means[k][j]);
            }
        }
    }
    for i in 0..n_out {
        for j in 0..n_out {
            cov[i][j] -= mean[i] * mean[j];
        }
    }
    (mean, cov, h)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn assert_matches_oracle(model: &GaussianMixture, t: f64) {
    let c = gmr_condition(model, t).unwrap();
    let (mean, cov, h) = oracle_condition(model, t);
    for i in 0..mean.len() {
        assert!(
            close(c.mean[i], mean[i], 1e-10),
            "mean[{i}] {} vs {}",
            c.mean[i],
            mean[i]
        );
        for j in 0..mean.len() {
            assert!(
                close(c.covariance[(i, j)], cov[i][j], 1e-10),
                "cov[{i},{j}]"
            );
        }
    }
    for (a, b) in c.weights.iter().zip(&h) {
        assert!(close(*a, *b, 1e-10));
    }
}

#[test]
fn single_component_matches_conditional_gaussian() {
    let cov = spd(
        4,
        &[
            1.0, 0.3, -0.2, 0.5, 0.1, 0.7, 0.2, -0.4, 0.6, 0.05, 0.9, 0.3, -0.1, 0.2, 0.4, 0.8,
        ],
        0.2,
    );
    let model = mixture(&[vec![1.0, 0.5, -0.3, 2.0]], &[cov], &[1.0]);
    for t in [-1.0, 0.0, 1.0, 2.5] {
        assert_matches_oracle(&model, t);
    }
}

#[test]
fn two_components_match_weighted_moments() {
    let c1 = spd(3, &[0.8, 0.2, -0.1, 0.3, 0.5, 0.2, -0.2, 0.1, 0.6], 0.1);
    let c2 = spd(3, &[0.4, -0.3, 0.2, 0.1, 0.9, -0.2, 0.3, 0.2, 0.5], 0.05);
    let model = mixture(
        &[vec![0.0, 1.0, -1.0], vec![2.0, -0.5, 0.5]],
        &[c1, c2],
        &[0.3, 0.7],
    );
    for t in [-0.5, 0.5, 1.0, 1.7, 3.0] {
        assert_matches_oracle(&model, t);
    }
}

fn dataset(rows: &[(f64, f64, f64, f64)], demos: usize) -> DemoDataset {
    let per = rows.len() / demos;
    let mut data = DemoDataset::new(1);
    for d in 0..demos {
        let samples = rows[d * per..(d + 1) * per]
            .iter()
            .enumerate()
            .map(|(i, (x, v, f, _))| DemoSample {
                t: 0.02 * i as f64,
                x: DVector::from_element(1, *x),
                xd: DVector::from_element(1, *v),
                f: DVector::from_element(1, *f),
            })
            .collect();
        data.demos.push(Demo {
            id: d as u32,
            samples,
        });
    }
    data
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixing_weights_sum_to_one(
        k in 1usize..6,
        entries in prop::collection::vec(-1.0f64..1.0, 16),
        centers in prop::collection::vec(-10.0f64..10.0, 6),
        weights in prop::collection::vec(0.05f64..1.0, 6),
        t in -1e6f64..1e6,
    ) {
        let means: Vec<Vec<f64>> = (0..k).map(|i| vec![centers[i], 0.1 * i as f64, -0.2, 0.3]).collect();
        let covs: Vec<DMatrix<f64>> = (0..k).map(|i| spd(4, &entries[i..], 0.05 + 0.1 * i as f64)).collect();
        let model = mixture(&means, &covs, &weights[..k]);
        let gmr = Gmr::new(&model).unwrap();
        for input in [t, t * 1e-6, centers[0]] {
            let c = gmr.condition(&[input]).unwrap();
            let s: f64 = c.weights.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-12, "sum {s} at t = {input}");
        }
    }

    #[test]
    fn em_fits_stay_regular_monotone_and_repeatable(
        rows in prop::collection::vec((-1.0f64..1.0, -0.5f64..0.5, -20.0f64..0.0, 0.0f64..1.0), 60..160),
        k in 1usize..5,
        seed in 0u64..1000,
    ) {
        let data = dataset(&rows, 2).to_matrix();
        let cfg = EmConfig { seed, max_iters: 60, ..EmConfig::default() };
        let a = fit_em_rows(&data, k, &cfg).unwrap();
        let b = fit_em_rows(&data, k, &cfg).unwrap();
        prop_assert_eq!(&a.mixture, &b.mixture);
        prop_assert!(a.report.max_decrease() <= 1e-9, "drop {}", a.report.max_decrease());
        let s: f64 = a.mixture.components.iter().map(|c| c.weight).sum();
        prop_assert!((s - 1.0).abs() <= 1e-12);
        for c in &a.mixture.components {
            prop_assert!(c.weight > 0.0 && c.weight <= 1.0);
            prop_assert!((&c.covariance - c.covariance.transpose()).amax() == 0.0);
            prop_assert!(min_eigenvalue(&c.covariance) >= cfg.reg_floor * (1.0 - 1e-9));
        }
    }

    #[test]
    fn demo_csv_round_trip(rows in prop::collection::vec((-1.0f64..1.0, -0.5f64..0.5, -20.0f64..0.0, 0.0f64..1.0), 6..40)) {
        let data = dataset(&rows, 3);
        let mut buf = Vec::new();
        data.write_csv(&mut buf, &["seed: 1".to_string()]).unwrap();
        let back = DemoDataset::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, data);
    }
}
