//! Plant integration under the whole-body controller.

use nalgebra::{DMatrix, DVector};

use super::table::{contact_force, ContactForce, TableModel};
use super::SimError;
use crate::whole_body::{
    cartesian_coriolis, cartesian_inertia, secondary_task, weighted_inverse_dynamics,
    weighting_matrix, ControllerGains, GainTable, LocoMode, Plant, RobotState,
};

/// Integration settings shared by teaching and rollouts.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    /// Arm control and integration step, s.
    pub dt: f64,
    /// Base command update period, s.
    pub base_period: f64,
    /// Largest accepted condition number of `J M⁻¹ Jᵀ`.
    pub cond_max: f64,
    /// Joint velocity magnitude treated as divergence.
    pub velocity_bound: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            base_period: 0.02,
            cond_max: crate::whole_body::DEFAULT_COND_MAX,
            velocity_bound: 50.0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0 && self.dt <= 0.01) {
            return Err(format!("dt = {} outside (0, 0.01]", self.dt));
        }
        if !(self.base_period >= self.dt) {
            return Err("base period must be at least one step".into());
        }
        if !(self.cond_max > 1.0 && self.velocity_bound > 0.0) {
            return Err("cond_max and velocity_bound must be positive".into());
        }
        Ok(())
    }

    pub fn base_every(&self) -> usize {
        ((self.base_period / self.dt).round() as usize).max(1)
    }
}

#[derive(Debug, Clone)]
pub struct StepInfo {
    pub tau: DVector<f64>,
    /// `J M⁻¹ Jᵀ` was ill-conditioned and the previous Λ was reused.
    pub singular: bool,
}

pub struct World<'p> {
    plant: &'p dyn Plant,
    pub table: TableModel,
    config: WorldConfig,
    gain_table: GainTable,
    mode: LocoMode,
    gains: ControllerGains,
    state: RobotState,
    steps: u64,
    held_base: DVector<f64>,
    lambda_prev: Option<DMatrix<f64>>,
}

impl<'p> World<'p> {
    pub fn new(
        plant: &'p dyn Plant,
        table: TableModel,
        config: WorldConfig,
        gain_table: GainTable,
        mode: LocoMode,
        q: DVector<f64>,
    ) -> Self {
        let n = plant.dofs();
        let gains = gain_table.gains(mode, plant.base_dofs(), &q);
        let state = RobotState::from_joints(plant, q, DVector::zeros(n));
        Self {
            plant,
            table,
            config,
            gain_table,
            mode,
            gains,
            state,
            steps: 0,
            held_base: DVector::zeros(plant.base_dofs()),
            lambda_prev: None,
        }
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn plant(&self) -> &dyn Plant {
        self.plant
    }

    pub fn mode(&self) -> LocoMode {
        self.mode
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.config.dt
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    /// Switching mode re-targets the posture task to the current configuration.
    pub fn set_mode(&mut self, mode: LocoMode) {
        if mode != self.mode {
            self.mode = mode;
            self.gains = self
                .gain_table
                .gains(mode, self.plant.base_dofs(), &self.state.q);
        }
    }

    pub fn contact(&self, offset: f64, offset_rate: f64) -> ContactForce {
        contact_force(
            &self.table,
            &self.state.x,
            &self.state.xdot,
            offset,
            offset_rate,
        )
    }

    fn task_inertia(
        &mut self,
        m: &DMatrix<f64>,
        j: &DMatrix<f64>,
    ) -> Result<(DMatrix<f64>, bool), SimError> {
        match cartesian_inertia(m, j, self.config.cond_max) {
            Ok(l) => {
                self.lambda_prev = Some(l.clone());
                Ok((l, false))
            }
            Err(e) => match &self.lambda_prev {
                Some(l) => Ok((l.clone(), true)),
                None => Err(SimError::WholeBody(e)),
            },
        }
    }

    /// Cartesian Coriolis matrix at the current state.
    pub fn cartesian_coriolis(&mut self) -> Result<DMatrix<f64>, SimError> {
        let m = self.plant.mass_matrix(&self.state.q);
        let j = self.plant.task_jacobian(&self.state.q);
        let (lambda, _) = self.task_inertia(&m, &j)?;
        Ok(cartesian_coriolis(self.plant, &self.state, &lambda)?)
    }

    /// Advance one step: realize the task wrench `wrench` through the weighted
    /// whole-body controller (gravity compensated) while `external` acts on
    /// the end effector.
    pub fn step(
        &mut self,
        wrench: &DVector<f64>,
        external: &DVector<f64>,
    ) -> Result<StepInfo, SimError> {
        let plant = self.plant;
        let q = &self.state.q.clone();
        let qdot = &self.state.qdot.clone();
        let m = plant.mass_matrix(q);
        let j = plant.task_jacobian(q);
        let (lambda, singular) = self.task_inertia(&m, &j)?;
        let w = weighting_matrix(&self.gains.h, &m)?;
        let tau0 = secondary_task(q, qdot, &self.gains);
        let mut tau =
            weighted_inverse_dynamics(&m, &j, &lambda, &w, wrench, &tau0, self.config.cond_max)?;
        let g = plant.gravity_torque(q);
        tau += &g;

        // base commands are held between base updates
        let nb = plant.base_dofs();
        if self.steps % self.config.base_every() as u64 == 0 {
            self.held_base = tau.rows(0, nb).into_owned();
        }
        tau.rows_mut(0, nb).copy_from(&self.held_base);

        let c = plant.coriolis_matrix(q, qdot);
        let rhs = &tau + j.transpose() * external - c * qdot - g;
        let qddot = m
            .cholesky()
            .ok_or(SimError::IntegratorDiverged { step: self.steps })?
            .solve(&rhs);
        let dt = self.config.dt;
        let new_qdot = qdot + qddot * dt;
        let new_q = q + &new_qdot * dt;
        if new_qdot.iter().chain(new_q.iter()).any(|v| !v.is_finite())
            || new_qdot.amax() > self.config.velocity_bound
        {
            return Err(SimError::IntegratorDiverged { step: self.steps });
        }
        self.state = RobotState::from_joints(plant, new_q, new_qdot);
        self.steps += 1;
        Ok(StepInfo { tau, singular })
    }
}

/// Joint configuration placing the end effector at `target`, found by damped
/// Newton steps on the arm joints (base joints held at `q_guess`).
pub fn inverse_kinematics(
    plant: &dyn Plant,
    target: &DVector<f64>,
    q_guess: &DVector<f64>,
) -> Result<DVector<f64>, SimError> {
    let nb = plant.base_dofs();
    let n = plant.dofs();
    let mut q = q_guess.clone();
    for _ in 0..200 {
        let err = target - plant.forward_kinematics(&q);
        if err.amax() < 1e-12 {
            return Ok(q);
        }
        let j = plant.task_jacobian(&q);
        let ja = j.columns(nb, n - nb).into_owned();
        let jjt = &ja * ja.transpose() + DMatrix::identity(err.len(), err.len()) * 1e-8;
        let step = ja.transpose() * jjt.cholesky().ok_or(SimError::Unreachable)?.solve(&err);
        for i in 0..n - nb {
            q[nb + i] += step[i];
        }
    }
    let err = target - plant.forward_kinematics(&q);
    if err.amax() < 1e-9 {
        Ok(q)
    } else {
        Err(SimError::Unreachable)
    }
}
