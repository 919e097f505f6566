use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::disturbance::{apply_disturbance, DisturbanceScript};
use super::table::TableModel;
use super::world::{inverse_kinematics, World, WorldConfig};
use super::SimError;
use crate::gmm::Reference;
use crate::stiffness::{StiffnessMode, VicController, VicParams};
use crate::whole_body::{GainTable, LocoMode, PlantModel};

/// Everything a rollout needs besides the reference and the disturbances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSetup {
    pub plant: PlantModel,
    pub table: TableModel,
    pub world: WorldConfig,
    pub gains: GainTable,
    pub loco_mode: LocoMode,
    pub vic: VicParams,
    /// Starting guess for the initial inverse kinematics.
    pub initial_posture: Vec<f64>,
    /// How long a payload violation may last before the safety stop, s.
    pub safety_window: f64,
    /// Standard deviation of the logged force estimate noise, N.
    pub force_noise: f64,
}

impl EpisodeSetup {
    pub fn validate(&self) -> Result<(), SimError> {
        self.plant.validate()?;
        self.gains.validate()?;
        self.table.validate().map_err(SimError::Config)?;
        self.world.validate().map_err(SimError::Config)?;
        self.vic.validate()?;
        let plant = self.plant.plant();
        if self.vic.dim() != plant.task_dim() {
            return Err(SimError::Config(format!(
                "stiffness parameters have {} axes, plant task space has {}",
                self.vic.dim(),
                plant.task_dim()
            )));
        }
        if self.initial_posture.len() != plant.dofs() {
            return Err(SimError::Config(format!(
                "initial posture has {} joints, plant has {}",
                self.initial_posture.len(),
                plant.dofs()
            )));
        }
        if !(self.safety_window >= 0.0 && self.force_noise >= 0.0) {
            return Err(SimError::Config(
                "safety window and force noise must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RowFlags {
    pub bypass: bool,
    pub infeasible: bool,
    pub tank_binding: bool,
    pub payload_binding: bool,
    pub tank_guard: bool,
    pub singular: bool,
    pub contact: bool,
}

/// One control step. Vectors are task-space unless noted.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub t: f64,
    /// joint positions
    pub q: Vec<f64>,
    pub x: Vec<f64>,
    pub x_d: Vec<f64>,
    pub f_d: Vec<f64>,
    /// Estimated interaction force (robot on environment), N.
    pub f_ext: Vec<f64>,
    pub k: Vec<f64>,
    pub d: Vec<f64>,
    /// Tank energy after this step, J.
    pub tank: f64,
    /// Tank energy change of this step, J.
    pub tank_delta: f64,
    /// Contact normal force on the end effector, N.
    pub normal: f64,
    pub flags: RowFlags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub mode: StiffnessMode,
    pub seed: u64,
    pub config_hash: String,
    pub dt: f64,
    pub dim: usize,
    pub initial_tank: f64,
    pub tank_epsilon: f64,
    pub f_max: Vec<f64>,
    pub k_min: Vec<f64>,
    pub k_max: Vec<f64>,
    pub rows: Vec<EpisodeRow>,
    /// Time of the safety stop, if one happened.
    pub safety_stop: Option<f64>,
}

impl EpisodeLog {
    pub fn header(&self) -> Vec<String> {
        let n_q = self.rows.first().map_or(0, |r| r.q.len());
        let mut h = vec!["t".to_string()];
        h.extend((0..n_q).map(|i| format!("q{i}")));
        for p in ["x", "x_d", "f_d", "f_ext", "k", "d"] {
            h.extend((0..self.dim).map(|i| format!("{p}{i}")));
        }
        for s in [
            "tank",
            "tank_delta",
            "normal",
            "bypass",
            "infeasible",
            "tank_binding",
            "payload_binding",
            "tank_guard",
            "singular",
            "contact",
        ] {
            h.push(s.to_string());
        }
        h
    }

    /// CSV with `#` metadata lines; every `every`-th row is written (the
    /// last row always is).
    pub fn write_csv<W: Write>(&self, mut w: W, every: usize) -> Result<(), SimError> {
        let every = every.max(1);
        writeln!(w, "# config_hash={}", self.config_hash)?;
        writeln!(w, "# mode={} seed={} dt={}", self.mode, self.seed, self.dt)?;
        if let Some(t) = self.safety_stop {
            writeln!(w, "# safety_stop={t}")?;
        }
        let mut c = csv::Writer::from_writer(w);
        c.write_record(self.header())?;
        let last = self.rows.len().saturating_sub(1);
        let b = |v: bool| if v { "1".to_string() } else { "0".to_string() };
        for (i, r) in self.rows.iter().enumerate() {
            if i % every != 0 && i != last {
                continue;
            }
            let mut rec = vec![format!("{:.3}", r.t)];
            for v in
                r.q.iter()
                    .chain(&r.x)
                    .chain(&r.x_d)
                    .chain(&r.f_d)
                    .chain(&r.f_ext)
                    .chain(&r.k)
                    .chain(&r.d)
            {
                rec.push(format!("{v:.6e}"));
            }
            rec.push(format!("{:.9e}", r.tank));
            rec.push(format!("{:.6e}", r.tank_delta));
            rec.push(format!("{:.6e}", r.normal));
            let f = r.flags;
            for v in [
                f.bypass,
                f.infeasible,
                f.tank_binding,
                f.payload_binding,
                f.tank_guard,
                f.singular,
                f.contact,
            ] {
                rec.push(b(v));
            }
            c.write_record(&rec)?;
        }
        c.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path, every: usize) -> Result<(), SimError> {
        let f = std::fs::File::create(path)
            .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        self.write_csv(std::io::BufWriter::new(f), every)
    }
}

/// Roll out one episode on the reference's time grid.
///
/// The reference must be sampled at the world step `setup.world.dt`.
pub fn run_episode(
    setup: &EpisodeSetup,
    mode: StiffnessMode,
    reference: &Reference,
    disturbances: &DisturbanceScript,
    seed: u64,
    config_hash: &str,
) -> Result<EpisodeLog, SimError> {
    setup.validate()?;
    disturbances.validate().map_err(SimError::Config)?;
    let samples = &reference.samples;
    let first = samples
        .first()
        .ok_or_else(|| SimError::Config("empty reference".into()))?;
    let dt = setup.world.dt;
    if samples
        .windows(2)
        .any(|w| ((w[1].t - w[0].t) - dt).abs() > 1e-9)
    {
        return Err(SimError::Config(format!(
            "reference must be sampled every {dt} s"
        )));
    }
    let plant = setup.plant.plant();
    let m = plant.task_dim();
    if first.x_d.len() != m {
        return Err(SimError::Config(format!(
            "reference has {} axes, plant task space has {m}",
            first.x_d.len()
        )));
    }

    let q_init = inverse_kinematics(
        plant,
        &first.x_d,
        &DVector::from_column_slice(&setup.initial_posture),
    )?;
    let mut world = World::new(
        plant,
        setup.table.clone(),
        setup.world.clone(),
        setup.gains,
        setup.loco_mode,
        q_init,
    );
    let mut ctrl = VicController::new(mode, setup.vic.clone(), dt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, setup.force_noise).map_err(|e| SimError::Config(e.to_string()))?;
    let env = &setup.vic.envelope;
    let window_steps = (setup.safety_window / dt).round() as usize;

    let mut log = EpisodeLog {
        mode,
        seed,
        config_hash: config_hash.to_string(),
        dt,
        dim: m,
        initial_tank: ctrl.tank().energy,
        tank_epsilon: ctrl.tank().epsilon,
        f_max: env.f_max.iter().copied().collect(),
        k_min: env.k_min.iter().copied().collect(),
        k_max: env.k_max.iter().copied().collect(),
        rows: Vec::with_capacity(samples.len()),
        safety_stop: None,
    };
    let mut over = 0usize;
    let t0 = first.t;
    for r in samples {
        let t = r.t - t0;
        let input = apply_disturbance(disturbances, t, m);
        let contact = world.contact(input.height_offset, input.height_rate);
        let external = &contact.force + &input.ee_force;
        let mut f_ext = -&external;
        if setup.force_noise > 0.0 {
            for v in f_ext.iter_mut() {
                *v += noise.sample(&mut rng);
            }
        }
        let mu = if setup.vic.cartesian_coriolis && mode == StiffnessMode::Os {
            Some(world.cartesian_coriolis()?)
        } else {
            None
        };
        let state = world.state().clone();
        let out = ctrl.step(&r.x_d, &r.f_d, &state.x, &state.xdot, mu.as_ref())?;

        let violated = (0..m).any(|j| f_ext[j].abs() > env.f_max[j]);
        over = if violated { over + 1 } else { 0 };

        let mut row = EpisodeRow {
            t,
            q: state.q.iter().copied().collect(),
            x: state.x.iter().copied().collect(),
            x_d: r.x_d.iter().copied().collect(),
            f_d: r.f_d.iter().copied().collect(),
            f_ext: f_ext.iter().copied().collect(),
            k: out.stiffness.iter().copied().collect(),
            d: out.damping.iter().copied().collect(),
            tank: out.tank.energy,
            tank_delta: out.flow.delta,
            normal: contact.normal,
            flags: RowFlags {
                bypass: out.flags.bypass,
                infeasible: out.flags.infeasible,
                tank_binding: out.flags.tank_binding,
                payload_binding: out.flags.payload_binding,
                tank_guard: out.flags.tank_guard,
                singular: false,
                contact: contact.in_contact(),
            },
        };
        if over > window_steps {
            log.rows.push(row);
            log.safety_stop = Some(t);
            log::info!("{mode}: safety stop at t = {t:.3} s");
            break;
        }
        let info = world.step(&out.wrench, &external)?;
        row.flags.singular = info.singular;
        log.rows.push(row);
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::{ReferenceFlags, ReferenceSample};
    use nalgebra::DMatrix;

    pub(crate) fn point_setup() -> EpisodeSetup {
        EpisodeSetup {
            plant: PlantModel::Point3d(Default::default()),
            table: TableModel::default(),
            world: WorldConfig::default(),
            gains: GainTable::default(),
            loco_mode: LocoMode::Manipulation,
            vic: VicParams::table_cleaning(3),
            initial_posture: vec![0.0; 3],
            safety_window: 0.05,
            force_noise: 0.0,
        }
    }

    fn hold(x: &[f64], f: &[f64], steps: usize) -> Reference {
        Reference {
            samples: (0..steps)
                .map(|i| ReferenceSample {
                    t: i as f64 * 1e-3,
                    x_d: DVector::from_column_slice(x),
                    xdot_d: DVector::zeros(x.len()),
                    f_d: DVector::from_column_slice(f),
                    output_covariance: DMatrix::identity(3 * x.len(), 3 * x.len()),
                })
                .collect(),
            flags: ReferenceFlags::default(),
        }
    }

    #[test]
    fn free_hold_stays_put() {
        let r = hold(&[0.5, 0.0, 0.6], &[0.0; 3], 500);
        let log = run_episode(
            &point_setup(),
            StiffnessMode::Os,
            &r,
            &DisturbanceScript::none(),
            1,
            "x",
        )
        .unwrap();
        assert_eq!(log.rows.len(), 500);
        let last = log.rows.last().unwrap();
        assert!((last.x[2] - 0.6).abs() < 1e-9);
        assert_eq!(last.k, vec![200.0; 3]);
    }

    #[test]
    fn pressing_hard_with_high_stiffness_stops() {
        // target 10 cm into the table: 1000 N/m × 0.1 m = 100 N > 60 N
        let mut r = hold(&[0.5, 0.0, 0.45], &[0.0, 0.0, -15.0], 3000);
        for s in r.samples.iter_mut().skip(100) {
            s.x_d[2] = 0.30;
        }
        let hs = run_episode(
            &point_setup(),
            StiffnessMode::Hs,
            &r,
            &DisturbanceScript::none(),
            1,
            "x",
        )
        .unwrap();
        assert!(hs.safety_stop.is_some());
        let ls = run_episode(
            &point_setup(),
            StiffnessMode::Ls,
            &r,
            &DisturbanceScript::none(),
            1,
            "x",
        )
        .unwrap();
        assert!(ls.safety_stop.is_none());
    }
}
