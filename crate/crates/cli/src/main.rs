use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use endocov::bias::{estimate, EstimateOptions};
use endocov::error::Error;
use endocov::harness::{replication_seed, run_experiment_with_progress, simulate_day, ExperimentConfig, REFERENCE_TICK};
use endocov::io;
use serde_json::json;

/// Hayashi-Yoshida covariance estimation under endogenous sampling times.
#[derive(Debug, Parser)]
#[command(name = "endocov", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one day and write both observation series.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate HY, the bias-corrected HY and the asymptotic variance from two tick files.
    Estimate {
        /// Tick file of the first asset (`time,price` header).
        first: PathBuf,
        /// Tick file of the second asset.
        second: PathBuf,
        /// Block size in 1C observations (at least 2).
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
        h: Option<u64>,
        /// Horizon; only observations strictly before it are used.
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        /// True integrated covariation; adds the feasible statistic.
        #[arg(long)]
        truth: Option<f64>,
    },
    /// Run replicated experiments and write replication, summary and histogram files.
    Experiment {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of replications (days).
        #[arg(long)]
        reps: Option<usize>,
        /// Block size in 1C observations (at least 2).
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
        h: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Tick size; every boundary is rescaled by alpha / 1e-4.
    #[arg(long)]
    alpha: Option<f64>,
    /// Grid steps per smallest expected inter-observation duration.
    #[arg(long)]
    dt_steps: Option<f64>,
}

impl ModelArgs {
    fn load(&self) -> Result<ExperimentConfig, Failure> {
        let mut config = io::load_config(&self.config).map_err(|e| Failure::at(&self.config, e))?;
        if let Some(seed) = self.seed {
            config.base_seed = seed;
        }
        if let Some(alpha) = self.alpha {
            config.tick_scale = alpha / REFERENCE_TICK;
        }
        if let Some(steps) = self.dt_steps {
            config.dt_steps = steps;
        }
        config.validate()?;
        Ok(config)
    }
}

/// Error with the exit code it maps to.
struct Failure {
    message: String,
    code: u8,
}

impl Failure {
    /// Errors reading `path`; a missing file is a usage error.
    fn at(path: &Path, e: Error) -> Self {
        match e {
            Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Failure {
                message: format!("{}: file not found", path.display()),
                code: 2,
            },
            e => Failure {
                message: format!("{}: {e}", path.display()),
                code: 1,
            },
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            message: e.to_string(),
            code: 1,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate { model, out } => simulate(&model.load()?, &out),
        Command::Estimate {
            first,
            second,
            h,
            t,
            truth,
        } => {
            let o1 = io::load_tick_file(&first, None).map_err(|e| Failure::at(&first, e))?;
            let o2 = io::load_tick_file(&second, None).map_err(|e| Failure::at(&second, e))?;
            let opts = EstimateOptions {
                h: h.map(|h| h as usize),
                horizon: t,
                truth,
            };
            let report = estimate(&o1, &o2, &opts)?;
            io::write_json(&report, std::io::stdout().lock())?;
            Ok(())
        }
        Command::Experiment { model, reps, h, out } => {
            let mut config = model.load()?;
            if let Some(reps) = reps {
                config.replications = reps;
            }
            if let Some(h) = h {
                config.h = Some(h as usize);
            }
            config.validate()?;
            let total = config.replications;
            let result = run_experiment_with_progress(&config, |done| {
                if done == total || done % 10 == 0 {
                    eprint!("\rreplications {done}/{total}");
                    if done == total {
                        eprintln!();
                    }
                }
            })?;
            io::write_experiment(&result, &out)?;
            let s = &result.summary;
            eprintln!(
                "HY rmse {:.3e}  BCHY rmse {:.3e}  reduction {:.1}%  failed {}",
                s.hy_rmse,
                s.bchy_rmse,
                100.0 * s.reduction,
                s.failed
            );
            if result.monitor.clamp_flagged {
                eprintln!(
                    "warning: correlation clamped on {} of {} blocks",
                    result.monitor.clamped_blocks, result.monitor.blocks
                );
            }
            Ok(())
        }
    }
}

fn simulate(config: &ExperimentConfig, out: &Path) -> Result<(), Failure> {
    let (spec, boundaries) = config.model.resolve()?;
    let dt = config.grid_step()?;
    let seed = replication_seed(config.base_seed, 0);
    let day = simulate_day(&spec, &boundaries, config.tick_scale, config.horizon, dt, seed)?;
    std::fs::create_dir_all(out).map_err(|e| Failure::at(out, e.into()))?;
    for (k, obs) in day.observations.iter().enumerate() {
        let path = out.join(format!("asset{}.csv", k + 1));
        obs.save_csv(&path).map_err(|e| Failure::at(&path, e))?;
    }
    let summary = json!({
        "seed": seed,
        "horizon": config.horizon,
        "dt": dt,
        "steps": day.steps,
        "truth": day.truth,
        "observations": day.observations.iter().map(|o| o.count()).collect::<Vec<_>>(),
        "final_latent": day.observations.iter().map(|o| o.latent.last().copied()).collect::<Vec<_>>(),
    });
    let path = out.join("path.json");
    let write = || -> Result<(), Error> {
        let mut w = BufWriter::new(File::create(&path)?);
        io::write_json(&summary, &mut w)?;
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| Failure::at(&path, e))?;
    eprintln!(
        "{} and {} observations written to {}",
        day.observations[0].count(),
        day.observations[1].count(),
        out.display()
    );
    Ok(())
}
