//! Admittance-type teaching: a (synthetic) human wrench drives the desired
//! pose through `M ẍ_d + D ẋ_d = λ_h` while the robot tracks it with a stiff
//! constant impedance; the run is recorded as a demonstration.

mod teacher;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use teacher::{record_demo, synthetic_teacher, Phase, TeacherParams, TeacherScript};

use crate::gmm::GmmError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum AdmittanceError {
    #[error("time step {0} outside (0, 0.01] s")]
    InvalidStep(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid admittance parameters: {0}")]
    InvalidParams(String),
    #[error("invalid teacher script: {0}")]
    InvalidScript(String),
    #[error("phase {index} (`{name}`) did not finish within {limit} s")]
    PhaseTimeout {
        index: usize,
        name: String,
        limit: f64,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Data(#[from] GmmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdmittanceLevel {
    Low,
    Medium,
    High,
}

impl AdmittanceLevel {
    /// `(M, D)` per axis.
    pub fn values(self) -> (f64, f64) {
        match self {
            AdmittanceLevel::Low => (6.0, 40.0),
            AdmittanceLevel::Medium => (4.0, 30.0),
            AdmittanceLevel::High => (2.0, 20.0),
        }
    }
}

impl fmt::Display for AdmittanceLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdmittanceLevel::Low => "low",
            AdmittanceLevel::Medium => "medium",
            AdmittanceLevel::High => "high",
        })
    }
}

impl FromStr for AdmittanceLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "low" => Ok(AdmittanceLevel::Low),
            "medium" => Ok(AdmittanceLevel::Medium),
            "high" => Ok(AdmittanceLevel::High),
            _ => Err(format!("unknown admittance level `{s}`")),
        }
    }
}

/// Diagonal admittance `M ẍ_d + D ẋ_d = λ_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceParams {
    pub mass: DVector<f64>,
    pub damping: DVector<f64>,
    pub level: Option<AdmittanceLevel>,
}

impl AdmittanceParams {
    pub fn level(level: AdmittanceLevel, dim: usize) -> Self {
        let (m, d) = level.values();
        Self {
            mass: DVector::from_element(dim, m),
            damping: DVector::from_element(dim, d),
            level: Some(level),
        }
    }

    pub fn validate(&self) -> Result<(), AdmittanceError> {
        if self.mass.len() != self.damping.len() {
            return Err(AdmittanceError::Dimension(
                "mass and damping lengths differ".into(),
            ));
        }
        if self
            .mass
            .iter()
            .chain(self.damping.iter())
            .any(|v| !(*v > 0.0))
        {
            return Err(AdmittanceError::InvalidParams(
                "mass and damping must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Semi-implicit Euler step of the admittance. Axes with `mask[j] == false`
/// are frozen: their wrench is ignored and their state is returned unchanged.
pub fn step_admittance(
    x_d: &DVector<f64>,
    xdot_d: &DVector<f64>,
    lambda_h: &DVector<f64>,
    params: &AdmittanceParams,
    mask: Option<&[bool]>,
    dt: f64,
) -> Result<(DVector<f64>, DVector<f64>), AdmittanceError> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(AdmittanceError::InvalidStep(dt));
    }
    let m = x_d.len();
    if xdot_d.len() != m
        || lambda_h.len() != m
        || params.mass.len() != m
        || mask.map_or(false, |k| k.len() != m)
    {
        return Err(AdmittanceError::Dimension(format!("expected {m} axes")));
    }
    let mut x = x_d.clone();
    let mut v = xdot_d.clone();
    for j in 0..m {
        if mask.map_or(true, |k| k[j]) {
            v[j] += dt * (lambda_h[j] - params.damping[j] * v[j]) / params.mass[j];
            x[j] += dt * v[j];
        }
    }
    Ok((x, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn rest_stays_at_rest() {
        let p = AdmittanceParams::level(AdmittanceLevel::High, 2);
        let (x, xd) = step_admittance(
            &v(&[0.3, 0.4]),
            &v(&[0.0, 0.0]),
            &v(&[0.0, 0.0]),
            &p,
            None,
            1e-3,
        )
        .unwrap();
        assert_eq!(x, v(&[0.3, 0.4]));
        assert_eq!(xd, v(&[0.0, 0.0]));
    }

    #[test]
    fn steady_state_velocity() {
        // λ/D = 20/20 = 1 m/s, time constant M/D = 0.1 s
        let p = AdmittanceParams::level(AdmittanceLevel::High, 1);
        let (mut x, mut xd) = (v(&[0.0]), v(&[0.0]));
        for _ in 0..500 {
            (x, xd) = step_admittance(&x, &xd, &v(&[20.0]), &p, None, 1e-3).unwrap();
        }
        assert!((xd[0] - 1.0).abs() < 0.01);
    }

    #[test]
    fn halved_mass_same_steady_state_faster() {
        let full = AdmittanceParams::level(AdmittanceLevel::High, 1);
        let half = AdmittanceParams {
            mass: v(&[1.0]),
            ..full.clone()
        };
        let run = |p: &AdmittanceParams, steps: usize| {
            let (mut x, mut xd) = (v(&[0.0]), v(&[0.0]));
            for _ in 0..steps {
                (x, xd) = step_admittance(&x, &xd, &v(&[20.0]), p, None, 1e-4).unwrap();
            }
            xd[0]
        };
        // one time constant: 1 − e⁻¹ of the final value
        let target = 1.0 - (-1.0f64).exp();
        assert!((run(&full, 1000) - target).abs() < 2e-3);
        assert!((run(&half, 500) - target).abs() < 2e-3);
        assert!((run(&half, 20000) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn masked_axis_frozen_bitwise() {
        let p = AdmittanceParams::level(AdmittanceLevel::Low, 2);
        let x0 = v(&[0.123456789, 0.3]);
        let (x, xd) = step_admittance(
            &x0,
            &v(&[0.7, 0.0]),
            &v(&[50.0, 5.0]),
            &p,
            Some(&[false, true]),
            1e-3,
        )
        .unwrap();
        assert_eq!(x[0].to_bits(), x0[0].to_bits());
        assert_eq!(xd[0], 0.7);
        assert!(x[1] != 0.3);
    }

    #[test]
    fn rejects_large_step() {
        let p = AdmittanceParams::level(AdmittanceLevel::Medium, 1);
        assert!(step_admittance(&v(&[0.0]), &v(&[0.0]), &v(&[0.0]), &p, None, 0.02).is_err());
    }

    #[test]
    fn table_values() {
        assert_eq!(AdmittanceLevel::Low.values(), (6.0, 40.0));
        assert_eq!(AdmittanceLevel::Medium.values(), (4.0, 30.0));
        assert_eq!(AdmittanceLevel::High.values(), (2.0, 20.0));
    }
}
