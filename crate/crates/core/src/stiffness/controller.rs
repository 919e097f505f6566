use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::envelope::{QpWeights, StiffnessEnvelope};
use super::interaction::{
    damping_from_stiffness, interaction_affine, InteractionModel, InteractionModelInputs,
};
use super::problem::{solve_stiffness_qp, StiffnessProblem};
use super::tank::{tank_constraint, tank_step, TankConstraint, TankFlow, TankParams, TankState};
use super::StiffnessError;
use crate::whole_body::impedance_wrench;

/// Stiffness setting of a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StiffnessMode {
    /// constant `k_min`
    Ls,
    /// constant `k_max`
    Hs,
    /// online QP with tank
    Os,
}

impl StiffnessMode {
    pub const ALL: [StiffnessMode; 3] = [StiffnessMode::Ls, StiffnessMode::Hs, StiffnessMode::Os];

    pub fn as_str(self) -> &'static str {
        match self {
            StiffnessMode::Ls => "ls",
            StiffnessMode::Hs => "hs",
            StiffnessMode::Os => "os",
        }
    }
}

impl fmt::Display for StiffnessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StiffnessMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ls" => Ok(StiffnessMode::Ls),
            "hs" => Ok(StiffnessMode::Hs),
            "os" => Ok(StiffnessMode::Os),
            other => Err(format!(
                "unknown stiffness mode `{other}` (expected ls, hs or os)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VicParams {
    pub envelope: StiffnessEnvelope,
    pub weights: QpWeights,
    pub tank: TankParams,
    /// Energy kept above ε by the QP row to absorb rounding, J.
    #[serde(default = "default_tank_margin")]
    pub tank_margin: f64,
    /// Include the Cartesian Coriolis matrix μ(x, ẋ) in the interaction model.
    #[serde(default)]
    pub cartesian_coriolis: bool,
}

fn default_tank_margin() -> f64 {
    1e-12
}

impl VicParams {
    pub fn table_cleaning(dim: usize) -> Self {
        Self {
            envelope: StiffnessEnvelope::table_cleaning(dim),
            weights: QpWeights::table_cleaning(dim),
            tank: TankParams::default(),
            tank_margin: default_tank_margin(),
            cartesian_coriolis: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.envelope.dim()
    }

    pub fn validate(&self) -> Result<(), StiffnessError> {
        self.envelope.validate()?;
        self.weights.validate()?;
        if self.weights.q.len() != self.dim() {
            return Err(StiffnessError::Dimension);
        }
        let t = &self.tank;
        if !(t.epsilon > 0.0 && 0.5 * t.x_t0 * t.x_t0 > t.epsilon && t.t_max > t.epsilon) {
            return Err(StiffnessError::InvalidTank(format!(
                "need 0 < ε < ½x_t(0)² and T_max > ε (ε = {}, x_t(0) = {}, T_max = {})",
                t.epsilon, t.x_t0, t.t_max
            )));
        }
        Ok(())
    }
}

/// Per-step diagnostic flags.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VicFlags {
    /// tank at its floor, QP skipped
    pub bypass: bool,
    /// QP infeasible, fell back to `k_min`
    pub infeasible: bool,
    /// tank row binding at the optimum
    pub tank_binding: bool,
    /// a payload bound binding at the optimum
    pub payload_binding: bool,
    /// rounding guard replaced the QP answer by `k_min`
    pub tank_guard: bool,
}

#[derive(Debug, Clone)]
pub struct VicOutput {
    pub stiffness: DVector<f64>,
    pub damping: DVector<f64>,
    /// Commanded Cartesian wrench.
    pub wrench: DVector<f64>,
    pub tank: TankState,
    pub flow: TankFlow,
    pub flags: VicFlags,
}

/// Online variable impedance controller for one episode.
#[derive(Debug, Clone)]
pub struct VicController {
    mode: StiffnessMode,
    params: VicParams,
    dt: f64,
    stiffness: DVector<f64>,
    tank: TankState,
}

impl VicController {
    pub fn new(mode: StiffnessMode, params: VicParams, dt: f64) -> Result<Self, StiffnessError> {
        params.validate()?;
        let stiffness = match mode {
            StiffnessMode::Hs => params.envelope.k_max.clone(),
            _ => params.envelope.k_min.clone(),
        };
        let tank = TankState::new(&params.tank);
        Ok(Self {
            mode,
            params,
            dt,
            stiffness,
            tank,
        })
    }

    pub fn mode(&self) -> StiffnessMode {
        self.mode
    }

    pub fn tank(&self) -> &TankState {
        &self.tank
    }

    pub fn stiffness(&self) -> &DVector<f64> {
        &self.stiffness
    }

    pub fn params(&self) -> &VicParams {
        &self.params
    }

    /// One control step.
    ///
    /// `coriolis` is μ(x, ẋ) of the plant; `None` uses the quasi-static zero.
    pub fn step(
        &mut self,
        x_desired: &DVector<f64>,
        force_desired: &DVector<f64>,
        x: &DVector<f64>,
        xdot: &DVector<f64>,
        coriolis: Option<&DMatrix<f64>>,
    ) -> Result<VicOutput, StiffnessError> {
        let m = self.params.dim();
        if x_desired.len() != m || force_desired.len() != m || x.len() != m || xdot.len() != m {
            return Err(StiffnessError::Dimension);
        }
        let env = &self.params.envelope;
        let damping = damping_from_stiffness(&self.stiffness);
        let pose_error = x_desired - x;
        let velocity_error = -xdot;
        let mut flags = VicFlags::default();
        let mut flow = TankFlow::default();

        let stiffness = match self.mode {
            StiffnessMode::Ls => env.k_min.clone(),
            StiffnessMode::Hs => env.k_max.clone(),
            StiffnessMode::Os => {
                let constraint = tank_constraint(
                    &self.tank,
                    &pose_error,
                    &velocity_error,
                    &damping,
                    &env.k_min,
                    self.dt,
                    self.params.tank_margin,
                );
                let mut k = match constraint {
                    TankConstraint::Bypass => {
                        flags.bypass = true;
                        env.k_min.clone()
                    }
                    TankConstraint::Active(row) => {
                        let mut inputs = InteractionModelInputs::quasi_static(
                            pose_error.clone(),
                            velocity_error.clone(),
                            damping.clone(),
                            self.stiffness.clone(),
                        );
                        if let (true, Some(mu)) = (self.params.cartesian_coriolis, coriolis) {
                            inputs.coriolis = mu.clone();
                        }
                        let affine = interaction_affine(&InteractionModel::Simplified, &inputs);
                        let problem = StiffnessProblem {
                            wrench: &affine,
                            desired_force: force_desired,
                            weights: &self.params.weights,
                            envelope: env,
                            tank: Some(&row),
                        };
                        match solve_stiffness_qp(&problem) {
                            Ok(sol) => {
                                flags.tank_binding = sol.tank_active;
                                flags.payload_binding = sol.axes.iter().any(|a| a.payload);
                                sol.stiffness
                            }
                            Err(StiffnessError::Infeasible { .. }) => {
                                flags.infeasible = true;
                                env.k_min.clone()
                            }
                            Err(e) => return Err(e),
                        }
                    }
                };
                let (mut next, mut f) = tank_step(
                    &self.tank,
                    &pose_error,
                    &velocity_error,
                    &damping,
                    &(&k - &env.k_min),
                    self.dt,
                );
                if self.tank.is_active() && next.energy < self.tank.epsilon {
                    flags.tank_guard = true;
                    k = env.k_min.clone();
                    (next, f) = tank_step(
                        &self.tank,
                        &pose_error,
                        &velocity_error,
                        &damping,
                        &DVector::zeros(m),
                        self.dt,
                    );
                }
                self.tank = next;
                flow = f;
                k
            }
        };

        let wrench = impedance_wrench(x, xdot, x_desired, &stiffness, &damping);
        self.stiffness = stiffness.clone();
        Ok(VicOutput {
            stiffness,
            damping,
            wrench,
            tank: self.tank,
            flow,
            flags,
        })
    }
}
