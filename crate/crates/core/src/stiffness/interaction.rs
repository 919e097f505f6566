//! Interaction wrench models used as the force prediction inside the QP.
//!
//! Every model is affine in the diagonal stiffness `k`:
//! `F_ext(k) = offset + diag(x̃) k`. The QP only ever needs that pair.

use nalgebra::{DMatrix, DVector};

/// Damping ratio used by the double-diagonalization damping design.
pub const DAMPING_RATIO: f64 = 0.707;

/// `d = 2 · 0.707 · √k`, elementwise. The caller passes the stiffness of the
/// previous control step so the QP objective stays quadratic in `k`.
pub fn damping_from_stiffness(k_prev: &DVector<f64>) -> DVector<f64> {
    k_prev.map(|k| 2.0 * DAMPING_RATIO * k.max(0.0).sqrt())
}

/// Model with whatever extra signals it needs.
#[derive(Debug, Clone, PartialEq)]
pub enum InteractionModel {
    Simplified,
    NoInertiaShaping {
        cartesian_inertia: DMatrix<f64>,
        accel_error: DVector<f64>,
    },
    InertiaShaping {
        desired_inertia: DMatrix<f64>,
        accel_error: DVector<f64>,
    },
}

/// Per-step quantities feeding the interaction model.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionModelInputs {
    /// `x̃ = x_d − x`, m
    pub pose_error: DVector<f64>,
    /// `ẋ̃ = −ẋ` (the desired twist is taken as zero), m/s
    pub velocity_error: DVector<f64>,
    /// Cartesian Coriolis-like matrix `μ(x, ẋ)`; zero in the quasi-static default.
    pub coriolis: DMatrix<f64>,
    /// Diagonal of `D_d`, N·s/m
    pub damping: DVector<f64>,
    /// Stiffness applied at the previous step, N/m
    pub previous_stiffness: DVector<f64>,
}

impl InteractionModelInputs {
    pub fn quasi_static(
        pose_error: DVector<f64>,
        velocity_error: DVector<f64>,
        damping: DVector<f64>,
        previous_stiffness: DVector<f64>,
    ) -> Self {
        let m = pose_error.len();
        Self {
            pose_error,
            velocity_error,
            coriolis: DMatrix::zeros(m, m),
            damping,
            previous_stiffness,
        }
    }

    pub fn dim(&self) -> usize {
        self.pose_error.len()
    }
}

/// `F_ext(k) = offset + diag(slope) k`
#[derive(Debug, Clone, PartialEq)]
pub struct AffineWrench {
    pub offset: DVector<f64>,
    pub slope: DVector<f64>,
}

impl AffineWrench {
    pub fn eval(&self, k: &DVector<f64>) -> DVector<f64> {
        &self.offset + self.slope.component_mul(k)
    }
}

/// Coefficients of the interaction wrench as an affine function of stiffness.
pub fn interaction_affine(
    model: &InteractionModel,
    inputs: &InteractionModelInputs,
) -> AffineWrench {
    let damping = DMatrix::from_diagonal(&inputs.damping);
    let offset = match model {
        InteractionModel::Simplified => (&inputs.coriolis + &damping) * &inputs.velocity_error,
        InteractionModel::NoInertiaShaping {
            cartesian_inertia,
            accel_error,
        } => {
            cartesian_inertia * accel_error + (&inputs.coriolis + &damping) * &inputs.velocity_error
        }
        InteractionModel::InertiaShaping {
            desired_inertia,
            accel_error,
        } => desired_inertia * accel_error + &damping * &inputs.velocity_error,
    };
    AffineWrench {
        offset,
        slope: inputs.pose_error.clone(),
    }
}

pub fn interaction_wrench(
    model: &InteractionModel,
    inputs: &InteractionModelInputs,
    k: &DVector<f64>,
) -> DVector<f64> {
    interaction_affine(model, inputs).eval(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn zero_error_zero_wrench() {
        let inputs = InteractionModelInputs::quasi_static(
            v(&[0.0, 0.0]),
            v(&[0.0, 0.0]),
            v(&[20.0, 20.0]),
            v(&[200.0, 200.0]),
        );
        let f = interaction_wrench(&InteractionModel::Simplified, &inputs, &v(&[300.0, 900.0]));
        assert_eq!(f, v(&[0.0, 0.0]));
    }

    #[test]
    fn spring_only() {
        let inputs = InteractionModelInputs::quasi_static(
            v(&[0.0, 0.01]),
            v(&[0.0, 0.0]),
            v(&[0.0, 0.0]),
            v(&[200.0, 200.0]),
        );
        let f = interaction_wrench(&InteractionModel::Simplified, &inputs, &v(&[200.0, 500.0]));
        assert_eq!(f[0], 0.0);
        assert!((f[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn variants_agree_without_acceleration() {
        let inputs = InteractionModelInputs::quasi_static(
            v(&[0.02, -0.01]),
            v(&[0.1, 0.3]),
            v(&[20.0, 25.0]),
            v(&[200.0, 200.0]),
        );
        let k = v(&[400.0, 700.0]);
        let simple = interaction_wrench(&InteractionModel::Simplified, &inputs, &k);
        let full = interaction_wrench(
            &InteractionModel::NoInertiaShaping {
                cartesian_inertia: DMatrix::from_diagonal(&v(&[3.0, 4.0])),
                accel_error: v(&[0.0, 0.0]),
            },
            &inputs,
            &k,
        );
        assert_eq!(simple, full);
    }

    #[test]
    fn inertia_term_adds_linearly() {
        let inputs =
            InteractionModelInputs::quasi_static(v(&[0.0]), v(&[0.0]), v(&[0.0]), v(&[0.0]));
        let f = interaction_wrench(
            &InteractionModel::InertiaShaping {
                desired_inertia: DMatrix::from_element(1, 1, 2.0),
                accel_error: v(&[1.5]),
            },
            &inputs,
            &v(&[500.0]),
        );
        assert_eq!(f[0], 3.0);
    }

    #[test]
    fn damping_law_values() {
        let d = damping_from_stiffness(&v(&[0.0, 200.0, 500.0, 1000.0]));
        assert_eq!(d[0], 0.0);
        assert!((d[1] - 19.997).abs() < 1e-3);
        assert!((d[2] - 31.618).abs() < 1e-3);
        assert!((d[3] - 44.7146).abs() < 1e-3);
    }
}
