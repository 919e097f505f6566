//! The four pipeline stages behind the command line: record demonstrations,
//! train the mixture, roll out one episode, compare all stiffness settings.
//!
//! The `cmd_*` functions read and write files under the configured output
//! directory; the plain functions they wrap do no I/O.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::admittance::{record_demo, synthetic_teacher};
use crate::gmm::{
    fit_em, generate_reference, DemoDataset, GaussianMixture, Reference, ReferenceFlags, Restart,
};
use crate::sim::{
    detect_strokes, episode_metrics, place_protocol, run_episode, DisturbanceKind,
    DisturbanceScript, EpisodeLog, EpisodeMetrics,
};
use crate::stiffness::StiffnessMode;
use crate::{Error, ExperimentConfig};

/// Which disturbances a rollout sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DisturbanceSelection {
    None,
    /// One event of every kind, placed along the strokes.
    All,
    One(DisturbanceKind),
    /// The event list from the configured script file.
    Script,
}

impl fmt::Display for DisturbanceSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DisturbanceSelection::None => f.write_str("none"),
            DisturbanceSelection::All => f.write_str("all"),
            DisturbanceSelection::One(k) => f.write_str(k.as_str()),
            DisturbanceSelection::Script => f.write_str("script"),
        }
    }
}

impl FromStr for DisturbanceSelection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(DisturbanceSelection::None),
            "all" => Ok(DisturbanceSelection::All),
            "script" => Ok(DisturbanceSelection::Script),
            other => other
                .parse::<DisturbanceKind>()
                .map(DisturbanceSelection::One)
                .map_err(|_| {
                    format!("unknown disturbance `{other}` (none, all, script or a kind name)")
                }),
        }
    }
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Error> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))
}

pub fn demo_path(cfg: &ExperimentConfig, index: usize) -> PathBuf {
    cfg.out_dir.join("demos").join(format!("demo_{index}.csv"))
}

/// Record `n_demos` teaching sessions; demo `i` uses seed `seed + i`.
pub fn record_demos(cfg: &ExperimentConfig) -> Result<Vec<DemoDataset>, Error> {
    let script = cfg.teacher_script()?;
    let setup = cfg.episode_setup()?;
    (0..cfg.n_demos)
        .map(|i| {
            Ok(synthetic_teacher(
                &script,
                &setup,
                cfg.seed + i as u64,
                i as u32,
            )?)
        })
        .collect()
}

pub fn cmd_demo(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, Error> {
    let hash = cfg.hash()?;
    let demos = record_demos(cfg)?;
    create_dir(&cfg.out_dir.join("demos"))?;
    let mut paths = Vec::new();
    for (i, d) in demos.iter().enumerate() {
        let path = demo_path(cfg, i);
        let comments = vec![
            format!("config_hash={hash}"),
            format!("seed={}", cfg.seed + i as u64),
        ];
        record_demo(d, &path, &comments)?;
        log::info!("wrote {} ({} rows)", path.display(), d.rows());
        paths.push(path);
    }
    Ok(paths)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub config_hash: String,
    pub k: usize,
    pub demos: usize,
    pub rows: usize,
    pub period: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restarts: Vec<Restart>,
    /// Largest log-likelihood drop between iterations (0 when monotone).
    pub max_decrease: f64,
    pub log_likelihood: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub mixture: GaussianMixture,
    pub report: TrainReport,
}

/// Align the demos in time and fit the mixture.
pub fn train(
    cfg: &ExperimentConfig,
    data: &DemoDataset,
    config_hash: &str,
) -> Result<Trained, Error> {
    data.validate(2)?;
    if data.dim != cfg.task_dim() {
        return Err(Error::Config(format!(
            "demos have {} axes, the configured plant has {}",
            data.dim,
            cfg.task_dim()
        )));
    }
    let aligned = data.aligned(cfg.training.period)?;
    let fit = fit_em(&aligned, cfg.training.k, &cfg.training.em)?;
    if !fit.report.converged {
        log::warn!(
            "EM stopped after {} iterations without converging",
            fit.report.iterations()
        );
    }
    let report = TrainReport {
        config_hash: config_hash.to_string(),
        k: cfg.training.k,
        demos: aligned.demos.len(),
        rows: aligned.rows(),
        period: cfg.training.period,
        iterations: fit.report.iterations(),
        converged: fit.report.converged,
        restarts: fit.report.restarts.clone(),
        max_decrease: fit.report.max_decrease(),
        log_likelihood: fit.report.log_likelihood.clone(),
    };
    Ok(Trained {
        mixture: fit.mixture,
        report,
    })
}

pub fn model_path(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.join("model.json")
}

/// Train on the given demo files (merged in order) and write the model and
/// the training report.
pub fn cmd_train(cfg: &ExperimentConfig, demo_files: &[PathBuf]) -> Result<Trained, Error> {
    let hash = cfg.hash()?;
    if demo_files.is_empty() {
        return Err(Error::Config("no demonstration files given".into()));
    }
    let parts = demo_files
        .iter()
        .map(|p| DemoDataset::load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let data = DemoDataset::merge(parts)?;
    let trained = train(cfg, &data, &hash)?;
    create_dir(&cfg.out_dir)?;
    trained.mixture.save(&model_path(cfg))?;
    write_file(
        &cfg.out_dir.join("train_report.json"),
        &to_json(&trained.report)?,
    )?;
    Ok(trained)
}

/// GMR over the training time span, sampled at the control step.
pub fn build_reference(
    cfg: &ExperimentConfig,
    model: &GaussianMixture,
) -> Result<Reference, Error> {
    if model.output_dims.len() != 3 * cfg.task_dim() {
        return Err(Error::Config(format!(
            "model encodes {} outputs, the configured plant needs {}",
            model.output_dims.len(),
            3 * cfg.task_dim()
        )));
    }
    let (t0, t1) = model
        .input_support
        .as_ref()
        .and_then(|s| s.first().copied())
        .ok_or_else(|| Error::Config("model has no recorded time support".into()))?;
    let dt = cfg.world.dt;
    let n = ((t1 - t0) / dt).floor() as usize + 1;
    let grid: Vec<f64> = (0..n).map(|i| t0 + i as f64 * dt).collect();
    Ok(generate_reference(model, &grid, cfg.training.max_step)?)
}

/// Place the selected disturbances along the strokes of the reference.
pub fn build_disturbances(
    cfg: &ExperimentConfig,
    reference: &Reference,
    selection: DisturbanceSelection,
) -> Result<DisturbanceScript, Error> {
    let kinds: Vec<DisturbanceKind> = match selection {
        DisturbanceSelection::None => return Ok(DisturbanceScript::none()),
        DisturbanceSelection::Script => {
            return cfg.disturbance_script()?.ok_or_else(|| {
                Error::Config(
                    "`--disturbance script` needs disturbance.script in the config".into(),
                )
            })
        }
        DisturbanceSelection::All => DisturbanceKind::ALL.to_vec(),
        DisturbanceSelection::One(k) => vec![k],
    };
    let t0 = reference.samples.first().map_or(0.0, |s| s.t);
    let times: Vec<f64> = reference.samples.iter().map(|s| s.t - t0).collect();
    let normal: Vec<f64> = reference
        .samples
        .iter()
        .map(|s| s.f_d[s.f_d.len() - 1])
        .collect();
    let strokes = detect_strokes(
        &times,
        &normal,
        cfg.disturbance.stroke_threshold,
        cfg.disturbance.min_stroke,
    );
    log::debug!("{} strokes in the reference", strokes.len());
    place_protocol(&strokes, &kinds, cfg.disturbance.lead).map_err(Error::Config)
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub disturbance: DisturbanceSelection,
    pub log: EpisodeLog,
    pub metrics: EpisodeMetrics,
}

pub fn rollout(
    cfg: &ExperimentConfig,
    reference: &Reference,
    mode: StiffnessMode,
    selection: DisturbanceSelection,
    config_hash: &str,
) -> Result<Rollout, Error> {
    let setup = cfg.episode_setup()?;
    let script = build_disturbances(cfg, reference, selection)?;
    let log = run_episode(&setup, mode, reference, &script, cfg.seed, config_hash)?;
    let metrics = episode_metrics(&log, &cfg.rollout.segments);
    Ok(Rollout {
        disturbance: selection,
        log,
        metrics,
    })
}

#[derive(Debug, Serialize)]
struct RolloutSummary<'a> {
    config_hash: &'a str,
    seed: u64,
    disturbance: String,
    reference: ReferenceFlags,
    metrics: &'a EpisodeMetrics,
}

/// Roll out one episode and write its log CSV and metrics JSON.
pub fn cmd_rollout(
    cfg: &ExperimentConfig,
    model: &Path,
    mode: StiffnessMode,
    selection: DisturbanceSelection,
) -> Result<(Rollout, PathBuf), Error> {
    let hash = cfg.hash()?;
    let mixture = GaussianMixture::load(model)?;
    let reference = build_reference(cfg, &mixture)?;
    let r = rollout(cfg, &reference, mode, selection, &hash)?;
    create_dir(&cfg.out_dir)?;
    let stem = format!("rollout_{mode}_{selection}");
    let csv = cfg.out_dir.join(format!("{stem}.csv"));
    r.log.save(&csv, cfg.rollout.log_every)?;
    let summary = RolloutSummary {
        config_hash: &hash,
        seed: cfg.seed,
        disturbance: selection.to_string(),
        reference: reference.flags.clone(),
        metrics: &r.metrics,
    };
    write_file(
        &cfg.out_dir.join(format!("{stem}.json")),
        &to_json(&summary)?,
    )?;
    Ok((r, csv))
}

/// One pass/fail line of the comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub config_hash: String,
    /// nominal then disturbed, LS/HS/OS within each
    pub cells: Vec<(&'static str, EpisodeMetrics)>,
    pub checks: Vec<OrderingCheck>,
}

pub const SCENARIOS: [(&str, DisturbanceSelection); 2] = [
    ("nominal", DisturbanceSelection::None),
    ("disturbed", DisturbanceSelection::All),
];
pub const MODES: [StiffnessMode; 3] = [StiffnessMode::Ls, StiffnessMode::Hs, StiffnessMode::Os];

impl Comparison {
    pub fn cell(&self, scenario: &str, mode: StiffnessMode) -> Option<&EpisodeMetrics> {
        self.cells
            .iter()
            .find(|(s, m)| *s == scenario && m.mode == mode)
            .map(|(_, m)| m)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# config_hash={}\n", self.config_hash));
        out.push_str(
            "scenario,mode,completed,safety_stop_time,duration,contact_rows,free_rows,force_rmse,position_rmse,\
             mean_normal_force,mean_desired_normal_force,force_undershoot,min_tank_energy,tank_balance_error,\
             max_abs_force,free_mean_stiffness\n",
        );
        for (s, m) in &self.cells {
            let k_free = m.free_mean_stiffness.iter().sum::<f64>()
                / m.free_mean_stiffness.len().max(1) as f64;
            out.push_str(&format!(
                "{s},{},{},{},{:.3},{},{},{:.6},{:.6},{:.6},{:.6},{},{:.9},{:.3e},{:.6},{:.6}\n",
                m.mode,
                u8::from(!m.safety_stop),
                m.safety_stop_time
                    .map_or(String::new(), |t| format!("{t:.3}")),
                m.duration,
                m.contact_rows,
                m.free_rows,
                m.force_rmse_total,
                m.position_rmse,
                m.mean_normal_force,
                m.mean_desired_normal_force,
                u8::from(m.force_undershoot),
                m.min_tank_energy,
                m.tank_balance_error,
                m.max_abs_force,
                k_free,
            ));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<10} {:<4} {:>9} {:>11} {:>11} {:>10} {:>10} {:>10}\n",
            "scenario",
            "mode",
            "stop [s]",
            "F rmse [N]",
            "x rmse [m]",
            "F mean [N]",
            "T min [J]",
            "k free"
        );
        for (s, m) in &self.cells {
            let k_free = m.free_mean_stiffness.iter().sum::<f64>()
                / m.free_mean_stiffness.len().max(1) as f64;
            out.push_str(&format!(
                "{:<10} {:<4} {:>9} {:>11.3} {:>11.4} {:>10.2} {:>10.4} {:>10.1}\n",
                s,
                m.mode.to_string(),
                m.safety_stop_time
                    .map_or("-".to_string(), |t| format!("{t:.2}")),
                m.force_rmse_total,
                m.position_rmse,
                m.mean_normal_force,
                m.min_tank_energy,
                k_free,
            ));
        }
        out.push('\n');
        for c in &self.checks {
            out.push_str(&format!(
                "{} {}: {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            ));
        }
        out
    }
}

/// Behaviour orderings expected between the stiffness settings.
pub fn ordering_checks(c: &Comparison, k_min: &[f64]) -> Vec<OrderingCheck> {
    let mut checks = Vec::new();
    let get = |s, m| c.cell(s, m);
    let (ls, hs, os) = (
        get("nominal", StiffnessMode::Ls),
        get("nominal", StiffnessMode::Hs),
        get("nominal", StiffnessMode::Os),
    );
    if let (Some(ls), Some(hs), Some(os)) = (ls, hs, os) {
        checks.push(OrderingCheck {
            name: "os-best-force-tracking",
            passed: os.force_rmse_total < ls.force_rmse_total
                && os.force_rmse_total < hs.force_rmse_total,
            detail: format!(
                "contact force RMSE LS {:.3} N, HS {:.3} N, OS {:.3} N",
                ls.force_rmse_total, hs.force_rmse_total, os.force_rmse_total
            ),
        });
        checks.push(OrderingCheck {
            name: "ls-force-undershoot",
            passed: ls.contact_rows > 0
                && ls.mean_normal_force < 0.7 * ls.mean_desired_normal_force,
            detail: format!(
                "LS mean contact force {:.2} N vs 0.7 × {:.2} N",
                ls.mean_normal_force, ls.mean_desired_normal_force
            ),
        });
        let within = os
            .free_mean_stiffness
            .iter()
            .zip(k_min)
            .all(|(k, kmin)| (k - kmin).abs() <= 0.1 * kmin);
        checks.push(OrderingCheck {
            name: "os-compliant-free-motion",
            passed: os.free_rows > 0 && within && os.position_rmse <= 0.01,
            detail: format!(
                "OS free-motion stiffness {:?} N/m (k_min {:?}), position RMSE {:.4} m",
                os.free_mean_stiffness
                    .iter()
                    .map(|k| (k * 10.0).round() / 10.0)
                    .collect::<Vec<_>>(),
                k_min,
                os.position_rmse
            ),
        });
    }
    if let (Some(hs), Some(os)) = (
        get("disturbed", StiffnessMode::Hs),
        get("disturbed", StiffnessMode::Os),
    ) {
        checks.push(OrderingCheck {
            name: "hs-stops-os-completes",
            passed: hs.safety_stop && !os.safety_stop,
            detail: format!(
                "HS safety stop {}, OS safety stop {}",
                hs.safety_stop_time
                    .map_or("none".to_string(), |t| format!("at {t:.2} s")),
                os.safety_stop_time
                    .map_or("none".to_string(), |t| format!("at {t:.2} s")),
            ),
        });
    }
    checks
}

/// All stiffness settings on the nominal and the fully disturbed scenario,
/// cells run in parallel.
pub fn compare(
    cfg: &ExperimentConfig,
    reference: &Reference,
    config_hash: &str,
) -> Result<Comparison, Error> {
    let jobs: Vec<(&'static str, DisturbanceSelection, StiffnessMode)> = SCENARIOS
        .iter()
        .flat_map(|(s, d)| MODES.iter().map(move |m| (*s, *d, *m)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|(s, d, m)| rollout(cfg, reference, *m, *d, config_hash).map(|r| (*s, r.metrics)))
        .collect::<Result<Vec<_>, Error>>()?;
    let mut c = Comparison {
        config_hash: config_hash.to_string(),
        cells,
        checks: Vec::new(),
    };
    let k_min: Vec<f64> = cfg.vic_params()?.envelope.k_min.iter().copied().collect();
    c.checks = ordering_checks(&c, &k_min);
    Ok(c)
}

/// Run the comparison and write `compare.csv` and `compare.txt`.
pub fn cmd_compare(cfg: &ExperimentConfig, model: &Path) -> Result<Comparison, Error> {
    let hash = cfg.hash()?;
    let mixture = GaussianMixture::load(model)?;
    let reference = build_reference(cfg, &mixture)?;
    let c = compare(cfg, &reference, &hash)?;
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("compare.csv"), &c.to_csv())?;
    write_file(&cfg.out_dir.join("compare.txt"), &c.to_text())?;
    Ok(c)
}
