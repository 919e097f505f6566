//! Learned variable impedance control for a mobile manipulator cleaning a
//! table.
//!
//! Demonstrations recorded through an admittance interface ([`admittance`])
//! are encoded by a Gaussian mixture and replayed as time-indexed references
//! by Gaussian mixture regression ([`gmm`]). During execution, the Cartesian
//! stiffness is chosen every control step by a small QP that trades force
//! tracking against compliance, subject to payload limits and an energy tank
//! that keeps the variable impedance passive ([`stiffness`]). The resulting
//! task wrench is distributed over base and arm by weighted inverse dynamics
//! ([`whole_body`]) and simulated against a compliant table ([`sim`]).
//! [`pipeline`] strings the stages together for the `vic` command line tool.

pub mod admittance;
pub mod config;
pub mod gmm;
pub mod linalg;
pub mod pipeline;
pub mod sim;
pub mod stiffness;
pub mod whole_body;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::ExperimentConfig;

/// Errors surfaced by the pipeline commands.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    WholeBody(#[from] whole_body::WholeBodyError),
    #[error(transparent)]
    Stiffness(#[from] stiffness::StiffnessError),
    #[error(transparent)]
    Gmm(#[from] gmm::GmmError),
    #[error(transparent)]
    Sim(#[from] sim::SimError),
    #[error(transparent)]
    Admittance(#[from] admittance::AdmittanceError),
}

/// Process exit code for a finished episode that hit the safety stop.
pub const EXIT_SAFETY_STOP: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// 3 for bad input (configuration, files, data), 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        use admittance::AdmittanceError as A;
        use gmm::GmmError as G;
        use sim::SimError as S;
        match self {
            Error::Config(_) | Error::Io { .. } => EXIT_CONFIG,
            Error::WholeBody(e) => match e {
                whole_body::WholeBodyError::InvalidModel(_)
                | whole_body::WholeBodyError::Dimension(_) => EXIT_CONFIG,
                _ => EXIT_NUMERIC,
            },
            Error::Stiffness(e) => match e {
                stiffness::StiffnessError::Infeasible { .. } => EXIT_NUMERIC,
                _ => EXIT_CONFIG,
            },
            Error::Gmm(e) => match e {
                G::InvalidModel(_) | G::Input(_) => EXIT_NUMERIC,
                _ => EXIT_CONFIG,
            },
            Error::Sim(e) | Error::Admittance(A::Sim(e)) => match e {
                S::IntegratorDiverged { .. } | S::Unreachable => EXIT_NUMERIC,
                S::WholeBody(_) | S::Stiffness(_) => Error::from_sim_inner(e),
                _ => EXIT_CONFIG,
            },
            Error::Admittance(e) => match e {
                A::PhaseTimeout { .. } => EXIT_NUMERIC,
                _ => EXIT_CONFIG,
            },
        }
    }

    fn from_sim_inner(e: &sim::SimError) -> i32 {
        match e {
            sim::SimError::WholeBody(w) => match w {
                whole_body::WholeBodyError::InvalidModel(_)
                | whole_body::WholeBodyError::Dimension(_) => EXIT_CONFIG,
                _ => EXIT_NUMERIC,
            },
            sim::SimError::Stiffness(stiffness::StiffnessError::Infeasible { .. }) => EXIT_NUMERIC,
            _ => EXIT_CONFIG,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::Config("x".into()).exit_code(), EXIT_CONFIG);
        let io = Error::io(
            Path::new("a"),
            std::io::Error::from(std::io::ErrorKind::NotFound),
        );
        assert_eq!(io.exit_code(), EXIT_CONFIG);
        assert_eq!(
            Error::Sim(sim::SimError::Unreachable).exit_code(),
            EXIT_NUMERIC
        );
        let timeout = admittance::AdmittanceError::PhaseTimeout {
            index: 0,
            name: "press".into(),
            limit: 1.0,
        };
        assert_eq!(Error::Admittance(timeout).exit_code(), EXIT_NUMERIC);
        assert_eq!(
            Error::Gmm(gmm::GmmError::InvalidK(0)).exit_code(),
            EXIT_CONFIG
        );
    }
}
