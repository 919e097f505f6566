//! Deterministic contact simulation of the cleaning task.

mod disturbance;
mod episode;
mod metrics;
mod table;
mod world;

use thiserror::Error;

pub use disturbance::{
    apply_disturbance, detect_strokes, place_protocol, DisturbanceEvent, DisturbanceKind,
    DisturbanceScript, EnvironmentInput, Profile,
};
pub use episode::{run_episode, EpisodeLog, EpisodeRow, EpisodeSetup, RowFlags};
pub use metrics::{episode_metrics, EpisodeMetrics, SegmentThresholds};
pub use table::{contact_force, ContactForce, TableModel};
pub use world::{inverse_kinematics, StepInfo, World, WorldConfig};

use crate::stiffness::StiffnessError;
use crate::whole_body::WholeBodyError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("integrator diverged at step {step}")]
    IntegratorDiverged { step: u64 },
    #[error("initial pose not reachable")]
    Unreachable,
    #[error("invalid simulation setup: {0}")]
    Config(String),
    #[error(transparent)]
    WholeBody(#[from] WholeBodyError),
    #[error(transparent)]
    Stiffness(#[from] StiffnessError),
    #[error("i/o: {0}")]
    Io(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}
