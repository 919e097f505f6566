//! Online stiffness optimization under an energy-tank passivity constraint.

mod controller;
mod envelope;
mod interaction;
mod problem;
pub mod qp;
mod tank;

use thiserror::Error;

pub use controller::{StiffnessMode, VicController, VicFlags, VicOutput, VicParams};
pub use envelope::{QpWeights, StiffnessEnvelope};
pub use interaction::{
    damping_from_stiffness, interaction_affine, interaction_wrench, AffineWrench, InteractionModel,
    InteractionModelInputs, DAMPING_RATIO,
};
pub use problem::{solve_stiffness_qp, AxisActivity, StiffnessProblem, StiffnessSolution};
pub use qp::LinearConstraint;
pub use tank::{tank_constraint, tank_step, TankConstraint, TankFlow, TankParams, TankState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StiffnessError {
    #[error("invalid stiffness envelope: {0}")]
    InvalidEnvelope(String),
    #[error("invalid QP weights: {0}")]
    InvalidWeights(String),
    #[error("invalid tank parameters: {0}")]
    InvalidTank(String),
    #[error("dimension mismatch between stiffness problem parts")]
    Dimension,
    #[error("stiffness QP infeasible{}", .axis.map(|a| format!(" on axis {a}")).unwrap_or_default())]
    Infeasible { axis: Option<usize> },
}
