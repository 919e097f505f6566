use std::path::Path;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{step_admittance, AdmittanceError, AdmittanceLevel, AdmittanceParams};
use crate::gmm::{Demo, DemoDataset, DemoSample};
use crate::sim::{inverse_kinematics, EpisodeSetup, World};
use crate::whole_body::{impedance_wrench, LocoMode};

fn default_level() -> AdmittanceLevel {
    AdmittanceLevel::High
}

fn default_tolerance() -> f64 {
    0.01
}

/// One segment of a teaching session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    #[serde(default = "default_mode")]
    pub mode: LocoMode,
    #[serde(default = "default_level")]
    pub level: AdmittanceLevel,
    /// `false` freezes an axis; empty means every axis is free.
    #[serde(default)]
    pub mask: Vec<bool>,
    pub waypoint: Vec<f64>,
    /// Normal force to hold against the table, N. The normal axis is then
    /// force-regulated instead of driven to the waypoint.
    #[serde(default)]
    pub contact_force: Option<f64>,
    /// How long the contact force must stay within ±20% before the phase ends, s.
    #[serde(default)]
    pub settle: f64,
    pub max_duration: f64,
    /// Overrides the teacher's cruise speed, m/s.
    #[serde(default)]
    pub speed: Option<f64>,
    /// Waypoint acceptance radius per axis, m.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_mode() -> LocoMode {
    LocoMode::Manipulation
}

/// Behaviour of the simulated human.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherParams {
    pub speed: f64,
    /// Approach slope near the waypoint, 1/s.
    pub approach_gain: f64,
    /// Velocity response time the teacher aims for, s.
    pub response_time: f64,
    /// Normal velocity per newton of force error, m/(s·N).
    pub force_gain: f64,
    /// Stationary standard deviation of the wrench noise, N.
    pub noise_std: f64,
    /// Correlation time of the wrench noise, s.
    pub noise_tau: f64,
    /// Standard deviation of the recorded force noise, N.
    pub measurement_noise: f64,
    pub record_period: f64,
    /// Constant Cartesian stiffness of the robot while taught, N/m.
    pub robot_stiffness: f64,
}

impl Default for TeacherParams {
    fn default() -> Self {
        Self {
            speed: 0.05,
            approach_gain: 2.0,
            response_time: 0.05,
            force_gain: 0.005,
            noise_std: 0.2,
            noise_tau: 0.5,
            measurement_noise: 0.2,
            record_period: 0.02,
            robot_stiffness: 500.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherScript {
    /// End-effector start position, m.
    pub start: Vec<f64>,
    #[serde(default)]
    pub teacher: TeacherParams,
    pub phases: Vec<Phase>,
}

impl TeacherScript {
    pub fn validate(&self, dim: usize) -> Result<(), AdmittanceError> {
        let bad = |s: String| Err(AdmittanceError::InvalidScript(s));
        if self.start.len() != dim {
            return bad(format!(
                "start has {} axes, task space has {dim}",
                self.start.len()
            ));
        }
        if self.phases.is_empty() {
            return bad("no phases".into());
        }
        let p = &self.teacher;
        if !(p.speed > 0.0
            && p.approach_gain > 0.0
            && p.response_time > 0.0
            && p.force_gain > 0.0
            && p.noise_std >= 0.0
            && p.noise_tau > 0.0
            && p.measurement_noise >= 0.0
            && p.record_period > 0.0
            && p.robot_stiffness > 0.0)
        {
            return bad("teacher parameters must be positive".into());
        }
        for ph in &self.phases {
            if ph.waypoint.len() != dim || !(ph.mask.is_empty() || ph.mask.len() == dim) {
                return bad(format!(
                    "phase `{}`: waypoint and mask need {dim} axes",
                    ph.name
                ));
            }
            if !(ph.max_duration > 0.0 && ph.settle >= 0.0 && ph.tolerance > 0.0) {
                return bad(format!(
                    "phase `{}`: durations and tolerance must be positive",
                    ph.name
                ));
            }
            if let Some(f) = ph.contact_force {
                if ph.mode != LocoMode::Manipulation {
                    return bad(format!(
                        "phase `{}`: contact force only in manipulation",
                        ph.name
                    ));
                }
                if !(f > 0.0) {
                    return bad(format!(
                        "phase `{}`: contact force must be positive",
                        ph.name
                    ));
                }
            }
        }
        Ok(())
    }

    /// Six strokes across the table alternated with five lift-and-return
    /// motions. `dim` is 2 (x, z) or 3 (x, y, z).
    pub fn table_cleaning(dim: usize, table_height: f64) -> Self {
        let (x0, x1) = (0.30, 0.70);
        let above = table_height + 0.05;
        let force = 15.0;
        let lane = |i: usize| -0.125 + 0.05 * i as f64;
        let at = |x: f64, i: usize, z: f64| -> Vec<f64> {
            if dim == 3 {
                vec![x, lane(i), z]
            } else {
                vec![x, z]
            }
        };
        let mut press_mask = vec![false; dim];
        press_mask[dim - 1] = true;
        let phase = |name: String, waypoint: Vec<f64>| Phase {
            name,
            mode: LocoMode::Manipulation,
            level: AdmittanceLevel::High,
            mask: Vec::new(),
            waypoint,
            contact_force: None,
            settle: 0.0,
            max_duration: 30.0,
            speed: None,
            tolerance: 0.01,
        };
        let mut phases = Vec::new();
        for i in 0..6 {
            phases.push(Phase {
                mask: press_mask.clone(),
                contact_force: Some(force),
                settle: 0.5,
                ..phase(format!("press-{i}"), at(x0, i, table_height))
            });
            phases.push(Phase {
                contact_force: Some(force),
                ..phase(format!("stroke-{i}"), at(x1, i, table_height))
            });
            phases.push(Phase {
                speed: Some(0.06),
                ..phase(format!("lift-{i}"), at(x1, i, above))
            });
            if i < 5 {
                phases.push(Phase {
                    speed: Some(0.06),
                    ..phase(format!("return-{i}"), at(x0, i + 1, above))
                });
            }
        }
        Self {
            start: at(x0, 0, above),
            teacher: TeacherParams::default(),
            phases,
        }
    }

    pub fn from_toml(s: &str) -> Result<Self, AdmittanceError> {
        toml::from_str(s).map_err(|e| AdmittanceError::InvalidScript(e.to_string()))
    }
}

/// Run the scripted teaching session in closed loop with the simulated robot
/// and return the recorded demonstration (demo id `demo_id`).
pub fn synthetic_teacher(
    script: &TeacherScript,
    setup: &EpisodeSetup,
    seed: u64,
    demo_id: u32,
) -> Result<DemoDataset, AdmittanceError> {
    setup.validate()?;
    let plant = setup.plant.plant();
    let m = plant.task_dim();
    script.validate(m)?;
    let p = &script.teacher;
    let dt = setup.world.dt;
    let nz = m - 1;

    let start = DVector::from_column_slice(&script.start);
    let q = inverse_kinematics(
        plant,
        &start,
        &DVector::from_column_slice(&setup.initial_posture),
    )?;
    let first_mode = script.phases[0].mode;
    let mut world = World::new(
        plant,
        setup.table.clone(),
        setup.world.clone(),
        setup.gains,
        first_mode,
        q,
    );
    let k = DVector::from_element(m, p.robot_stiffness);
    let d = DVector::from_element(m, 2.0 * 0.707 * p.robot_stiffness.sqrt());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let meas = Normal::new(0.0, p.measurement_noise)
        .map_err(|e| AdmittanceError::InvalidScript(e.to_string()))?;
    let a = (-dt / p.noise_tau).exp();
    let ou_scale = p.noise_std * (1.0 - a * a).sqrt();
    let mut noise = DVector::<f64>::zeros(m);

    let mut x_d = start.clone();
    let mut xdot_d = DVector::<f64>::zeros(m);
    let record_every = ((p.record_period / dt).round() as u64).max(1);
    let mut steps = 0u64;
    let mut samples = Vec::new();

    for (index, ph) in script.phases.iter().enumerate() {
        world.set_mode(ph.mode);
        let adm = AdmittanceParams::level(ph.level, m);
        let wp = DVector::from_column_slice(&ph.waypoint);
        let speed = ph.speed.unwrap_or(p.speed);
        let free: Vec<bool> = if ph.mask.is_empty() {
            vec![true; m]
        } else {
            ph.mask.clone()
        };
        let tracked: Vec<bool> = (0..m)
            .map(|j| free[j] && !(ph.contact_force.is_some() && j == nz))
            .collect();
        let limit = (ph.max_duration / dt).round() as u64;
        let mut settled = 0u64;
        let settle_steps = (ph.settle / dt).round() as u64;
        let mut n = 0u64;
        loop {
            let state = world.state().clone();
            let contact = world.contact(0.0, 0.0);

            let reached = (0..m).all(|j| !tracked[j] || (wp[j] - state.x[j]).abs() <= ph.tolerance);
            let force_ok = match ph.contact_force {
                Some(f) => (contact.normal - f).abs() <= 0.2 * f,
                None => true,
            };
            settled = if force_ok { settled + 1 } else { 0 };
            if reached && settled > settle_steps {
                break;
            }
            if n >= limit {
                return Err(AdmittanceError::PhaseTimeout {
                    index,
                    name: ph.name.clone(),
                    limit: ph.max_duration,
                });
            }

            if steps % record_every == 0 {
                let mut f = -&contact.force;
                for v in f.iter_mut() {
                    *v += meas.sample(&mut rng);
                }
                samples.push(DemoSample {
                    t: world.time(),
                    x: x_d.clone(),
                    xd: xdot_d.clone(),
                    f,
                });
            }

            // desired velocity: cruise toward the waypoint, slow down near it
            let err: DVector<f64> =
                DVector::from_fn(m, |j, _| if tracked[j] { wp[j] - x_d[j] } else { 0.0 });
            let dist = err.norm();
            let mut v_ref = if dist > 1e-12 {
                err * (speed.min(p.approach_gain * dist) / dist)
            } else {
                DVector::zeros(m)
            };
            if let (Some(f), true) = (ph.contact_force, free[nz]) {
                v_ref[nz] = p.force_gain * (contact.normal - f);
            }
            for j in 0..m {
                noise[j] = a * noise[j] + ou_scale * unit.sample(&mut rng);
            }
            let lambda = DVector::from_fn(m, |j, _| {
                adm.damping[j] * v_ref[j]
                    + adm.mass[j] * (v_ref[j] - xdot_d[j]) / p.response_time
                    + noise[j]
            });
            let mask = if ph.mask.is_empty() {
                None
            } else {
                Some(ph.mask.as_slice())
            };
            (x_d, xdot_d) = step_admittance(&x_d, &xdot_d, &lambda, &adm, mask, dt)?;

            let wrench = impedance_wrench(&state.x, &state.xdot, &x_d, &k, &d);
            world.step(&wrench, &contact.force)?;
            steps += 1;
            n += 1;
        }
        log::debug!(
            "teacher: phase {} done at t = {:.2} s",
            ph.name,
            world.time()
        );
    }
    let mut data = DemoDataset::new(m);
    data.demos.push(Demo {
        id: demo_id,
        samples,
    });
    data.validate(1)?;
    Ok(data)
}

/// Write recorded demonstrations to a CSV file.
pub fn record_demo(
    data: &DemoDataset,
    path: &Path,
    comments: &[String],
) -> Result<(), AdmittanceError> {
    if data.rows() == 0 {
        return Err(AdmittanceError::InvalidScript(format!(
            "{}: no samples to record",
            path.display()
        )));
    }
    data.save(path, comments)?;
    Ok(())
}
