use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Plant, WholeBodyError};

/// Cartesian double integrator with constant inertia. Joint space and task
/// space coincide; gravity is taken as compensated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PointMassModel {
    /// Diagonal of the constant Cartesian inertia, kg.
    pub inertia: Vec<f64>,
}

impl Default for PointMassModel {
    fn default() -> Self {
        Self {
            inertia: vec![3.0, 3.0, 3.0],
        }
    }
}

impl PointMassModel {
    pub fn validate(&self) -> Result<(), WholeBodyError> {
        if self.inertia.is_empty() || self.inertia.iter().any(|m| !(*m > 0.0)) {
            return Err(WholeBodyError::InvalidModel(
                "point-mass inertia must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Plant for PointMassModel {
    fn name(&self) -> &'static str {
        "point-3d"
    }

    fn dofs(&self) -> usize {
        self.inertia.len()
    }

    fn base_dofs(&self) -> usize {
        0
    }

    fn task_dim(&self) -> usize {
        self.inertia.len()
    }

    fn forward_kinematics(&self, q: &DVector<f64>) -> DVector<f64> {
        q.clone()
    }

    fn task_jacobian(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.dofs(), self.dofs())
    }

    fn jacobian_derivative(&self, _q: &DVector<f64>, _qdot: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.dofs(), self.dofs())
    }

    fn mass_matrix(&self, _q: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.inertia))
    }

    fn coriolis_matrix(&self, _q: &DVector<f64>, _qdot: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.dofs(), self.dofs())
    }

    fn gravity_torque(&self, _q: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.dofs())
    }

    fn potential_energy(&self, _q: &DVector<f64>) -> f64 {
        0.0
    }
}
