//! Experiment configuration (TOML) and its content hash.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::admittance::TeacherScript;
use crate::gmm::EmConfig;
use crate::sim::{DisturbanceScript, EpisodeSetup, SegmentThresholds, TableModel, WorldConfig};
use crate::stiffness::{QpWeights, StiffnessEnvelope, TankParams, VicParams};
use crate::whole_body::{GainTable, LocoMode, PlantModel};
use crate::Error;

/// A scalar applied to every axis, or one value per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerAxis {
    All(f64),
    Each(Vec<f64>),
}

impl PerAxis {
    pub fn expand(&self, dim: usize) -> Result<DVector<f64>, Error> {
        match self {
            PerAxis::All(v) => Ok(DVector::from_element(dim, *v)),
            PerAxis::Each(v) if v.len() == dim => Ok(DVector::from_column_slice(v)),
            PerAxis::Each(v) => Err(Error::Config(format!(
                "expected {dim} per-axis values, got {}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StiffnessConfig {
    pub k_min: PerAxis,
    pub k_max: PerAxis,
    pub f_max: PerAxis,
    pub q: PerAxis,
    pub r: PerAxis,
    pub cartesian_coriolis: bool,
}

impl Default for StiffnessConfig {
    fn default() -> Self {
        Self {
            k_min: PerAxis::All(200.0),
            k_max: PerAxis::All(1000.0),
            f_max: PerAxis::All(60.0),
            q: PerAxis::All(3200.0),
            r: PerAxis::All(1.0),
            cartesian_coriolis: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Number of mixture components.
    pub k: usize,
    /// Sample period of the aligned training data, s.
    pub period: f64,
    /// Largest accepted reference position step at the control rate, m.
    pub max_step: f64,
    pub em: EmConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            k: 48,
            period: 0.04,
            max_step: 0.005,
            em: EmConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    /// How long a force-limit violation may last before the safety stop, s.
    pub safety_window: f64,
    /// Standard deviation of the force estimate noise, N.
    pub force_noise: f64,
    /// Write every n-th control step to the episode CSV.
    pub log_every: usize,
    pub segments: SegmentThresholds,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            safety_window: 0.05,
            force_noise: 0.2,
            log_every: 10,
            segments: SegmentThresholds::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceConfig {
    /// Explicit event list used by `--disturbance script`.
    pub script: Option<PathBuf>,
    /// Delay between stroke onset and a placed disturbance, s.
    pub lead: f64,
    /// Desired normal force that marks a stroke, N.
    pub stroke_threshold: f64,
    /// Shorter force plateaus are not counted as strokes, s.
    pub min_stroke: f64,
}

impl Default for DisturbanceConfig {
    fn default() -> Self {
        Self {
            script: None,
            lead: 1.0,
            stroke_threshold: 3.0,
            min_stroke: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_demos: usize,
    pub out_dir: PathBuf,
    pub plant: PlantModel,
    /// Starting guess for inverse kinematics; defaults per plant.
    pub initial_posture: Option<Vec<f64>>,
    pub table: TableModel,
    pub world: WorldConfig,
    pub gains: GainTable,
    pub loco_mode: LocoMode,
    pub stiffness: StiffnessConfig,
    pub tank: TankParams,
    /// Teacher script file; the built-in cleaning script when absent.
    pub teacher_script: Option<PathBuf>,
    pub training: TrainingConfig,
    pub rollout: RolloutConfig,
    pub disturbance: DisturbanceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_demos: 3,
            out_dir: PathBuf::from("out"),
            plant: PlantModel::default(),
            initial_posture: None,
            table: TableModel::default(),
            world: WorldConfig::default(),
            gains: GainTable::default(),
            loco_mode: LocoMode::Manipulation,
            stiffness: StiffnessConfig::default(),
            tank: TankParams::default(),
            teacher_script: None,
            training: TrainingConfig::default(),
            rollout: RolloutConfig::default(),
            disturbance: DisturbanceConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parse TOML. Relative input paths are resolved against `base`; `out_dir`
    /// stays relative to the working directory.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, Error> {
        let mut c: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        resolve(&mut c.teacher_script);
        resolve(&mut c.disturbance.script);
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn task_dim(&self) -> usize {
        self.plant.plant().task_dim()
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.n_demos == 0 {
            return Err(Error::Config("n_demos must be at least 1".into()));
        }
        if self.training.k == 0 || !(self.training.period > 0.0) || !(self.training.max_step > 0.0)
        {
            return Err(Error::Config(
                "training needs k ≥ 1 and positive period and max_step".into(),
            ));
        }
        if self.rollout.log_every == 0 {
            return Err(Error::Config("log_every must be at least 1".into()));
        }
        for p in [&self.teacher_script, &self.disturbance.script]
            .into_iter()
            .flatten()
        {
            if !p.is_file() {
                return Err(Error::Config(format!(
                    "referenced file {} does not exist",
                    p.display()
                )));
            }
        }
        self.episode_setup()?.validate()?;
        Ok(())
    }

    pub fn vic_params(&self) -> Result<VicParams, Error> {
        let m = self.task_dim();
        let s = &self.stiffness;
        Ok(VicParams {
            envelope: StiffnessEnvelope {
                k_min: s.k_min.expand(m)?,
                k_max: s.k_max.expand(m)?,
                f_max: s.f_max.expand(m)?,
            },
            weights: QpWeights {
                q: s.q.expand(m)?,
                r: s.r.expand(m)?,
            },
            tank: self.tank,
            tank_margin: 1e-12,
            cartesian_coriolis: s.cartesian_coriolis,
        })
    }

    pub fn episode_setup(&self) -> Result<EpisodeSetup, Error> {
        let initial_posture = match &self.initial_posture {
            Some(q) => q.clone(),
            None => default_posture(&self.plant),
        };
        Ok(EpisodeSetup {
            plant: self.plant.clone(),
            table: self.table.clone(),
            world: self.world.clone(),
            gains: self.gains,
            loco_mode: self.loco_mode,
            vic: self.vic_params()?,
            initial_posture,
            safety_window: self.rollout.safety_window,
            force_noise: self.rollout.force_noise,
        })
    }

    pub fn teacher_script(&self) -> Result<TeacherScript, Error> {
        match &self.teacher_script {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                TeacherScript::from_toml(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))
            }
            None => Ok(TeacherScript::table_cleaning(
                self.task_dim(),
                self.table.height,
            )),
        }
    }

    pub fn disturbance_script(&self) -> Result<Option<DisturbanceScript>, Error> {
        match &self.disturbance.script {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let s: DisturbanceScript = toml::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                s.validate()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                Ok(Some(s))
            }
            None => Ok(None),
        }
    }

    /// SHA-256 over the canonical JSON form of the configuration and the
    /// contents of every file it references.
    pub fn hash(&self) -> Result<String, Error> {
        let mut h = Sha256::new();
        let mut canonical = self.clone();
        // the output location does not change any result
        canonical.out_dir = PathBuf::new();
        let json = serde_json::to_value(&canonical).map_err(|e| Error::Config(e.to_string()))?;
        h.update(json.to_string().as_bytes());
        for p in [&self.teacher_script, &self.disturbance.script]
            .into_iter()
            .flatten()
        {
            h.update(std::fs::read(p).map_err(|e| Error::io(p, e))?);
        }
        Ok(hex::encode(h.finalize()))
    }
}

/// A bent-elbow start for the planar arm, zeros otherwise.
pub fn default_posture(plant: &PlantModel) -> Vec<f64> {
    match plant {
        PlantModel::PlanarXz(m) => {
            let mut q = vec![0.0; 1 + m.links.len()];
            let bend = [-0.6, 1.6, 0.6];
            for (i, v) in q.iter_mut().skip(1).enumerate() {
                *v = bend.get(i).copied().unwrap_or(0.0);
            }
            q
        }
        PlantModel::Point3d(m) => vec![0.0; m.inertia.len()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        let c = ExperimentConfig::from_toml("", Path::new("/base")).unwrap();
        assert_eq!(c.n_demos, 3);
        assert_eq!(c.out_dir, PathBuf::from("out"));
        assert_eq!(c.vic_params().unwrap(), VicParams::table_cleaning(2));
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(ExperimentConfig::from_toml("sed = 3", Path::new(".")).is_err());
    }

    #[test]
    fn missing_script_rejected() {
        let e =
            ExperimentConfig::from_toml("teacher_script = \"nope.toml\"", Path::new("/nowhere"))
                .unwrap_err();
        assert!(e.to_string().contains("/nowhere/nope.toml"));
    }

    #[test]
    fn per_axis_values() {
        let c = ExperimentConfig::from_toml("[stiffness]\nk_min = [150.0, 250.0]", Path::new("."))
            .unwrap();
        assert_eq!(
            c.vic_params().unwrap().envelope.k_min.as_slice(),
            &[150.0, 250.0]
        );
        assert!(ExperimentConfig::from_toml(
            "[stiffness]\nk_min = [1.0, 2.0, 3.0]",
            Path::new(".")
        )
        .is_err());
    }

    #[test]
    fn point_plant_config() {
        let c = ExperimentConfig::from_toml("[plant]\nkind = \"point3d\"", Path::new(".")).unwrap();
        assert_eq!(c.task_dim(), 3);
    }

    #[test]
    fn hash_tracks_content_not_output_dir() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.out_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.seed = 2;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }
}
