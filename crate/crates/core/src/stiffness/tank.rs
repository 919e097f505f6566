//! Energy tank that certifies passivity of the variable stiffness.
//!
//! The tank stores `T = ½ x_t²`. It is charged by the power dissipated in the
//! Cartesian damper (while storage is enabled) and pays for the power that
//! the variable part of the stiffness `K_v = K_d − K_min` injects. When the
//! tank is at or below its floor `ε`, the variable part is switched off and the
//! stiffness must stay at `K_min`.
//!
//! The energy, not `x_t`, is the integrated state so that the discrete energy
//! balance reconciles exactly.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::qp::LinearConstraint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TankParams {
    /// Energy floor ε, J.
    pub epsilon: f64,
    /// Storage limit above which dissipated energy is no longer stored, J.
    pub t_max: f64,
    /// Initial tank state x_t(0), √J.
    pub x_t0: f64,
}

impl Default for TankParams {
    fn default() -> Self {
        Self {
            epsilon: 0.4,
            t_max: 5.0,
            x_t0: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TankState {
    /// T = ½ x_t², J
    pub energy: f64,
    pub epsilon: f64,
    pub t_max: f64,
}

/// Power terms of one tank update.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TankFlow {
    /// `σ ẋ̃ᵀ D ẋ̃`, W
    pub stored_dissipation: f64,
    /// `x̃ᵀ K_v ẋ̃` (zero when the tank is depleted), W
    pub stiffness_power: f64,
    /// Energy change over the step, J
    pub delta: f64,
}

impl TankState {
    pub fn new(params: &TankParams) -> Self {
        Self {
            energy: 0.5 * params.x_t0 * params.x_t0,
            epsilon: params.epsilon,
            t_max: params.t_max,
        }
    }

    pub fn x_t(&self) -> f64 {
        (2.0 * self.energy).sqrt()
    }

    /// Storage switch σ: 0 once the tank holds `T_max` or more.
    pub fn sigma(&self) -> f64 {
        if self.energy >= self.t_max {
            0.0
        } else {
            1.0
        }
    }

    /// True when the variable stiffness may draw from the tank (`T > ε`).
    pub fn is_active(&self) -> bool {
        self.energy > self.epsilon
    }
}

/// `ẋ̃ᵀ diag(d) ẋ̃`
fn dissipated_power(velocity_error: &DVector<f64>, damping: &DVector<f64>) -> f64 {
    velocity_error
        .iter()
        .zip(damping.iter())
        .map(|(v, d)| d * v * v)
        .sum()
}

/// One explicit Euler step of the tank energy: `T ← T + Ṫ Δt`.
pub fn tank_step(
    tank: &TankState,
    pose_error: &DVector<f64>,
    velocity_error: &DVector<f64>,
    damping: &DVector<f64>,
    k_variable: &DVector<f64>,
    dt: f64,
) -> (TankState, TankFlow) {
    debug_assert!(dt > 0.0);
    let stored_dissipation = tank.sigma() * dissipated_power(velocity_error, damping);
    let stiffness_power = if tank.is_active() {
        pose_error
            .iter()
            .zip(k_variable.iter())
            .zip(velocity_error.iter())
            .map(|((x, k), v)| x * k * v)
            .sum()
    } else {
        0.0
    };
    let delta = (stored_dissipation + stiffness_power) * dt;
    let next = TankState {
        energy: tank.energy + delta,
        ..*tank
    };
    (
        next,
        TankFlow {
            stored_dissipation,
            stiffness_power,
            delta,
        },
    )
}

/// Outcome of building the passivity constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum TankConstraint {
    /// `cᵀ k ≤ b` keeps the post-step energy at or above ε.
    Active(LinearConstraint),
    /// The tank is at its floor: the QP is bypassed and `k = k_min`.
    Bypass,
}

/// Linear form of `T + [σ ẋ̃ᵀDẋ̃ + Σ x̃ⱼ ẋ̃ⱼ (kⱼ − k_min,ⱼ)] Δt ≥ ε + margin`.
///
/// `margin` (J) absorbs the rounding difference between the constraint and
/// [`tank_step`]; zero reproduces the bare floor.
pub fn tank_constraint(
    tank: &TankState,
    pose_error: &DVector<f64>,
    velocity_error: &DVector<f64>,
    damping: &DVector<f64>,
    k_min: &DVector<f64>,
    dt: f64,
    margin: f64,
) -> TankConstraint {
    if !tank.is_active() {
        return TankConstraint::Bypass;
    }
    let stored = tank.sigma() * dissipated_power(velocity_error, damping);
    let power = pose_error.component_mul(velocity_error);
    let normal = -&power * dt;
    let bound = tank.energy + stored * dt - tank.epsilon - margin - power.dot(k_min) * dt;
    TankConstraint::Active(LinearConstraint::new(normal, bound))
}
