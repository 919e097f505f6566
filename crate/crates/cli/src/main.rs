use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vic_core::pipeline::{self, DisturbanceSelection};
use vic_core::stiffness::StiffnessMode;
use vic_core::{Error, ExperimentConfig, EXIT_CONFIG, EXIT_SAFETY_STOP};

/// Learned variable impedance control: demonstrations, training, rollouts.
#[derive(Parser)]
#[command(name = "vic", version)]
struct Cli {
    /// Experiment configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for teaching noise and force-estimate noise.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the configured one).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record synthetic demonstrations through the admittance interface.
    Demo,
    /// Fit the mixture model to demonstration files.
    Train {
        /// Demo CSV files; defaults to the files `demo` writes.
        demos: Vec<PathBuf>,
    },
    /// Roll out one episode with the learned reference.
    Rollout {
        #[arg(long, default_value = "os")]
        mode: StiffnessMode,
        /// none, all, script, or one of lift-slow, lift-fast, sine-low,
        /// sine-high, collide-contact, collide-free
        #[arg(long, default_value = "none")]
        disturbance: DisturbanceSelection,
        /// Model JSON; defaults to the one `train` writes.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run LS, HS and OS on the nominal and the disturbed scenario.
    Compare {
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => {
            let cfg = ExperimentConfig::default();
            cfg.validate()?;
            cfg
        }
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<i32, Error> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Demo => {
            for p in pipeline::cmd_demo(&cfg)? {
                println!("{}", p.display());
            }
        }
        Command::Train { demos } => {
            let files = if demos.is_empty() {
                (0..cfg.n_demos).map(|i| pipeline::demo_path(&cfg, i)).collect()
            } else {
                demos.clone()
            };
            let t = pipeline::cmd_train(&cfg, &files)?;
            let ll = t.report.log_likelihood.last().copied().unwrap_or(f64::NAN);
            println!(
                "{} components, {} rows, {} iterations, log-likelihood {ll:.3}{}",
                t.mixture.k(),
                t.report.rows,
                t.report.iterations,
                if t.report.converged { "" } else { " (not converged)" }
            );
            println!("{}", pipeline::model_path(&cfg).display());
        }
        Command::Rollout { mode, disturbance, model } => {
            let model = model.clone().unwrap_or_else(|| pipeline::model_path(&cfg));
            let (r, csv) = pipeline::cmd_rollout(&cfg, &model, *mode, *disturbance)?;
            let m = &r.metrics;
            println!(
                "{mode} / {disturbance}: force RMSE {:.3} N, position RMSE {:.4} m, min tank {:.4} J",
                m.force_rmse_total, m.position_rmse, m.min_tank_energy
            );
            println!("{}", csv.display());
            if let Some(t) = m.safety_stop_time {
                println!("safety stop at {t:.3} s");
                return Ok(EXIT_SAFETY_STOP);
            }
        }
        Command::Compare { model } => {
            let model = model.clone().unwrap_or_else(|| pipeline::model_path(&cfg));
            let c = pipeline::cmd_compare(&cfg, &model)?;
            print!("{}", c.to_text());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
