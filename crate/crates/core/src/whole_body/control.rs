use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Plant, RobotState, WholeBodyError};
use crate::linalg::{spd_condition_number, spd_inverse, symmetrize};

/// Largest accepted condition number of `J M⁻¹ Jᵀ`.
pub const DEFAULT_COND_MAX: f64 = 1e8;

/// `F = K_d (x_d − x) − D_d ẋ` with diagonal gains.
pub fn impedance_wrench(
    x: &DVector<f64>,
    xdot: &DVector<f64>,
    x_d: &DVector<f64>,
    k_d: &DVector<f64>,
    d_d: &DVector<f64>,
) -> DVector<f64> {
    k_d.component_mul(&(x_d - x)) - d_d.component_mul(xdot)
}

/// `Λ = (J M⁻¹ Jᵀ)⁻¹`
pub fn cartesian_inertia(
    m: &DMatrix<f64>,
    j: &DMatrix<f64>,
    cond_max: f64,
) -> Result<DMatrix<f64>, WholeBodyError> {
    let m_inv = spd_inverse(m).ok_or(WholeBodyError::NotPositiveDefinite("M"))?;
    let lambda_inv = symmetrize(&(j * m_inv * j.transpose()));
    let condition = spd_condition_number(&lambda_inv);
    if !(condition <= cond_max) {
        return Err(WholeBodyError::NearSingularJacobian { condition });
    }
    let lambda =
        spd_inverse(&lambda_inv).ok_or(WholeBodyError::NearSingularJacobian { condition })?;
    Ok(symmetrize(&lambda))
}

/// `J̄ = M⁻¹ Jᵀ Λ`
pub fn dynamically_consistent_inverse(
    m: &DMatrix<f64>,
    j: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
) -> Result<DMatrix<f64>, WholeBodyError> {
    let m_inv = spd_inverse(m).ok_or(WholeBodyError::NotPositiveDefinite("M"))?;
    Ok(m_inv * j.transpose() * lambda)
}

/// `W = Hᵀ M⁻¹ H` for diagonal `H`.
pub fn weighting_matrix(
    h: &DVector<f64>,
    m: &DMatrix<f64>,
) -> Result<DMatrix<f64>, WholeBodyError> {
    if h.iter().any(|v| !(*v > 0.0)) {
        return Err(WholeBodyError::NotPositiveDefinite("H"));
    }
    let m_inv = spd_inverse(m).ok_or(WholeBodyError::NotPositiveDefinite("M"))?;
    let mut w = m_inv;
    for r in 0..w.nrows() {
        for c in 0..w.ncols() {
            w[(r, c)] *= h[r] * h[c];
        }
    }
    Ok(symmetrize(&w))
}

/// Torque realizing the task wrench `F` with minimum `W`-weighted effort,
/// plus the secondary torque `τ_0` projected so it produces no task wrench:
///
/// `τ = W⁻¹M⁻¹JᵀΛ_W Λ⁻¹ F + (I − W⁻¹M⁻¹JᵀΛ_W J M⁻¹) τ_0`,
/// `Λ_W = (J M⁻¹ W⁻¹ M⁻¹ Jᵀ)⁻¹`.
pub fn weighted_inverse_dynamics(
    m: &DMatrix<f64>,
    j: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    w: &DMatrix<f64>,
    force: &DVector<f64>,
    tau0: &DVector<f64>,
    cond_max: f64,
) -> Result<DVector<f64>, WholeBodyError> {
    let n = m.nrows();
    if j.ncols() != n || w.nrows() != n || tau0.len() != n || force.len() != j.nrows() {
        return Err(WholeBodyError::Dimension(format!(
            "M {n}×{n}, J {}×{}, W {}×{}, F {}, τ0 {}",
            j.nrows(),
            j.ncols(),
            w.nrows(),
            w.ncols(),
            force.len(),
            tau0.len()
        )));
    }
    let m_inv = spd_inverse(m).ok_or(WholeBodyError::NotPositiveDefinite("M"))?;
    let w_inv = spd_inverse(w).ok_or(WholeBodyError::NotPositiveDefinite("W"))?;
    let a = j * &m_inv;
    let lambda_w_inv = symmetrize(&(&a * &w_inv * a.transpose()));
    let condition = spd_condition_number(&lambda_w_inv);
    if !(condition <= cond_max) {
        return Err(WholeBodyError::NearSingularWeightedInertia { condition });
    }
    let lambda_w = spd_inverse(&lambda_w_inv)
        .ok_or(WholeBodyError::NearSingularWeightedInertia { condition })?;
    // P satisfies J M⁻¹ P = I
    let p = &w_inv * a.transpose() * lambda_w;
    let lambda_inv_f = lambda
        .clone()
        .cholesky()
        .ok_or(WholeBodyError::NotPositiveDefinite("Λ"))?
        .solve(force);
    let projected = tau0 - &p * (&a * tau0);
    Ok(&p * lambda_inv_f + projected)
}

/// `μ = J̄ᵀ C J̄ − Λ J̇ J̄`, the Cartesian counterpart of the joint Coriolis matrix.
pub fn cartesian_coriolis<P: Plant + ?Sized>(
    plant: &P,
    state: &RobotState,
    lambda: &DMatrix<f64>,
) -> Result<DMatrix<f64>, WholeBodyError> {
    let m = plant.mass_matrix(&state.q);
    let j = plant.task_jacobian(&state.q);
    let jbar = dynamically_consistent_inverse(&m, &j, lambda)?;
    let c = plant.coriolis_matrix(&state.q, &state.qdot);
    let jdot = plant.jacobian_derivative(&state.q, &state.qdot);
    Ok(jbar.transpose() * c * &jbar - lambda * jdot * &jbar)
}

/// `τ_0 = −D_0 q̇ − K_0 (q − q_0)`
pub fn secondary_task(
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    gains: &ControllerGains,
) -> DVector<f64> {
    -gains.d0.component_mul(qdot) - gains.k0.component_mul(&(q - &gains.q0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocoMode {
    /// base held, arm does the work
    Manipulation,
    /// base carries most of the motion
    Locomotion,
}

/// Joint-space gains of the whole-body controller (all diagonal).
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerGains {
    pub h: DVector<f64>,
    pub k0: DVector<f64>,
    pub d0: DVector<f64>,
    pub q0: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeGains {
    pub h_base: f64,
    pub h_arm: f64,
    pub k0: f64,
    pub d0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainTable {
    pub manipulation: ModeGains,
    pub locomotion: ModeGains,
}

impl Default for GainTable {
    fn default() -> Self {
        Self {
            manipulation: ModeGains {
                h_base: 10.0,
                h_arm: 2.0,
                k0: 2.0,
                d0: 1.0,
            },
            locomotion: ModeGains {
                h_base: 2.0,
                h_arm: 10.0,
                k0: 50.0,
                d0: 4.0,
            },
        }
    }
}

impl GainTable {
    pub fn mode(&self, mode: LocoMode) -> &ModeGains {
        match mode {
            LocoMode::Manipulation => &self.manipulation,
            LocoMode::Locomotion => &self.locomotion,
        }
    }

    /// Gains for `mode`, with the posture target taken from `q0`.
    pub fn gains(&self, mode: LocoMode, n_b: usize, q0: &DVector<f64>) -> ControllerGains {
        let g = self.mode(mode);
        let n = q0.len();
        ControllerGains {
            h: DVector::from_fn(n, |i, _| if i < n_b { g.h_base } else { g.h_arm }),
            k0: DVector::from_element(n, g.k0),
            d0: DVector::from_element(n, g.d0),
            q0: q0.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), WholeBodyError> {
        for g in [&self.manipulation, &self.locomotion] {
            if !(g.h_base > 0.0 && g.h_arm > 0.0 && g.k0 >= 0.0 && g.d0 >= 0.0) {
                return Err(WholeBodyError::InvalidModel(
                    "gain table needs H > 0 and K_0, D_0 ≥ 0".into(),
                ));
            }
        }
        Ok(())
    }
}
