use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::StiffnessError;

/// Admissible stiffness range and interaction-force limit, per task axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StiffnessEnvelope {
    /// N/m
    pub k_min: DVector<f64>,
    /// N/m
    pub k_max: DVector<f64>,
    /// N
    pub f_max: DVector<f64>,
}

impl StiffnessEnvelope {
    pub fn uniform(dim: usize, k_min: f64, k_max: f64, f_max: f64) -> Self {
        Self {
            k_min: DVector::from_element(dim, k_min),
            k_max: DVector::from_element(dim, k_max),
            f_max: DVector::from_element(dim, f_max),
        }
    }

    /// `k_min = 200`, `k_max = 1000`, `F_max = 60` on every axis.
    pub fn table_cleaning(dim: usize) -> Self {
        Self::uniform(dim, 200.0, 1000.0, 60.0)
    }

    pub fn dim(&self) -> usize {
        self.k_min.len()
    }

    pub fn validate(&self) -> Result<(), StiffnessError> {
        let n = self.dim();
        if self.k_max.len() != n || self.f_max.len() != n {
            return Err(StiffnessError::InvalidEnvelope("dimension mismatch".into()));
        }
        for i in 0..n {
            if !(self.k_min[i] > 0.0 && self.k_min[i] <= self.k_max[i]) {
                return Err(StiffnessError::InvalidEnvelope(format!(
                    "axis {i}: need 0 < k_min ≤ k_max, got [{}, {}]",
                    self.k_min[i], self.k_max[i]
                )));
            }
            if !(self.f_max[i] > 0.0) {
                return Err(StiffnessError::InvalidEnvelope(format!(
                    "axis {i}: F_max must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// Diagonals of the force-tracking weight `Q` and the compliance weight `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpWeights {
    pub q: DVector<f64>,
    pub r: DVector<f64>,
}

impl QpWeights {
    pub fn uniform(dim: usize, q: f64, r: f64) -> Self {
        Self {
            q: DVector::from_element(dim, q),
            r: DVector::from_element(dim, r),
        }
    }

    /// `Q = 3200 I`, `R = I`: force tracking dominates.
    pub fn table_cleaning(dim: usize) -> Self {
        Self::uniform(dim, 3200.0, 1.0)
    }

    pub fn validate(&self) -> Result<(), StiffnessError> {
        if self.q.len() != self.r.len() {
            return Err(StiffnessError::InvalidWeights("dimension mismatch".into()));
        }
        if self.q.iter().chain(self.r.iter()).any(|w| !(*w > 0.0)) {
            return Err(StiffnessError::InvalidWeights(
                "weights must be positive".into(),
            ));
        }
        Ok(())
    }
}
