//! Reduced whole-body model of a mobile manipulator and the weighted
//! Cartesian impedance controller that distributes a task wrench between
//! base and arm.

mod control;
mod planar;
mod point;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use control::{
    cartesian_coriolis, cartesian_inertia, dynamically_consistent_inverse, impedance_wrench,
    secondary_task, weighted_inverse_dynamics, weighting_matrix, ControllerGains, GainTable,
    LocoMode, ModeGains, DEFAULT_COND_MAX,
};
pub use planar::{Link, RobotModel};
pub use point::PointMassModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WholeBodyError {
    #[error("J M⁻¹ Jᵀ is near singular (condition number {condition:.3e})")]
    NearSingularJacobian { condition: f64 },
    #[error("weighted task inertia is near singular (condition number {condition:.3e})")]
    NearSingularWeightedInertia { condition: f64 },
    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("invalid robot model: {0}")]
    InvalidModel(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Rigid-body plant seen by the controller and the simulator.
///
/// Equations of motion: `M(q) q̈ + C(q, q̇) q̇ + g(q) = τ + τ_ext`.
pub trait Plant {
    fn name(&self) -> &'static str;
    fn dofs(&self) -> usize;
    /// Number of leading joints that belong to the mobile base.
    fn base_dofs(&self) -> usize;
    fn task_dim(&self) -> usize;
    fn forward_kinematics(&self, q: &DVector<f64>) -> DVector<f64>;
    fn task_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64>;
    /// `J̇(q, q̇)`
    fn jacobian_derivative(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DMatrix<f64>;
    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64>;
    /// Matrix `C` with `C q̇` the velocity-dependent generalized forces. The
    /// base block holds the virtual damping.
    fn coriolis_matrix(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DMatrix<f64>;
    fn gravity_torque(&self, q: &DVector<f64>) -> DVector<f64>;
    fn potential_energy(&self, q: &DVector<f64>) -> f64;

    fn arm_dofs(&self) -> usize {
        self.dofs() - self.base_dofs()
    }
}

/// Joint state together with the matching task-space state.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub x: DVector<f64>,
    pub xdot: DVector<f64>,
}

impl RobotState {
    pub fn from_joints<P: Plant + ?Sized>(plant: &P, q: DVector<f64>, qdot: DVector<f64>) -> Self {
        let x = plant.forward_kinematics(&q);
        let xdot = plant.task_jacobian(&q) * &qdot;
        Self { q, qdot, x, xdot }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsTerms {
    pub mass: DMatrix<f64>,
    /// `C(q, q̇) q̇`, including the base damping `D_v q̇_b`.
    pub coriolis: DVector<f64>,
    pub gravity: DVector<f64>,
}

pub fn dynamics_terms<P: Plant + ?Sized>(plant: &P, state: &RobotState) -> DynamicsTerms {
    DynamicsTerms {
        mass: plant.mass_matrix(&state.q),
        coriolis: plant.coriolis_matrix(&state.q, &state.qdot) * &state.qdot,
        gravity: plant.gravity_torque(&state.q),
    }
}

/// Plant selection as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PlantModel {
    PlanarXz(RobotModel),
    Point3d(PointMassModel),
}

impl Default for PlantModel {
    fn default() -> Self {
        PlantModel::PlanarXz(RobotModel::default())
    }
}

impl PlantModel {
    pub fn plant(&self) -> &dyn Plant {
        match self {
            PlantModel::PlanarXz(m) => m,
            PlantModel::Point3d(m) => m,
        }
    }

    pub fn validate(&self) -> Result<(), WholeBodyError> {
        match self {
            PlantModel::PlanarXz(m) => m.validate(),
            PlantModel::Point3d(m) => m.validate(),
        }
    }
}
