use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dits::checks::{grad_check_tiny, selftest};
use dits::commands::{cmd_ablate, cmd_evaluate, cmd_forecast, cmd_train, Axis, ForecastMethod};
use dits::config::RunConfig;
use dits::dits_core::data::FutureMode;
use dits::pipeline::Parallel;
use dits::{Error, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "dits",
    version,
    about = "Diffusion transformer forecasting with known covariates"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, env = "DITS_SEED")]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true, env = "DITS_OUT")]
    out: Option<PathBuf>,
    /// Worker threads for gradient chunks, grid cells and ensemble windows.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Whether known-future covariates keep their horizon values.
    #[arg(long, global = true, value_enum)]
    future: Option<Future>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Future {
    With,
    Without,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    SeasonalNaive,
}

#[derive(Subcommand)]
enum Command {
    /// Train every grid cell and keep the best checkpoint.
    Train,
    /// Sample ensembles for the test windows.
    Forecast {
        /// Defaults to `<out>/train/checkpoint.json`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Ensemble size; the configured value when absent.
        #[arg(long)]
        members: Option<usize>,
        /// Write a baseline forecast instead of sampling a model.
        #[arg(long, value_enum, conflicts_with = "checkpoint")]
        baseline: Option<Baseline>,
    },
    /// Score forecasts against the test windows.
    Evaluate {
        /// Defaults to `<out>/forecast`.
        #[arg(long)]
        forecast: Option<PathBuf>,
    },
    /// Compare variants along one axis.
    Ablate {
        #[arg(long, value_enum)]
        axis: Axis,
    },
    /// Check analytic gradients of a tiny model against finite differences.
    GradCheck,
    /// Run the built-in invariant checks.
    Selftest,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config(vec![String::from("--config is required for this command")]))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(f) = cli.future {
        cfg.window.future = match f {
            Future::With => FutureMode::WithFuture,
            Future::Without => FutureMode::WithoutFuture,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).unwrap_or_default());
}

fn log(line: &str) {
    eprintln!("{line}");
}

fn run(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match &cli.command {
        Command::Train => {
            let cfg = load_config(cli)?;
            print(&cmd_train(&cfg, &Parallel, &log)?);
        }
        Command::Forecast {
            checkpoint,
            members,
            baseline,
        } => {
            let cfg = load_config(cli)?;
            let default_ck = cfg.out.join("train").join("checkpoint.json");
            let method = match baseline {
                Some(Baseline::SeasonalNaive) => ForecastMethod::SeasonalNaive,
                None => ForecastMethod::Checkpoint(checkpoint.as_deref().unwrap_or(&default_ck)),
            };
            print(&cmd_forecast(&cfg, method, *members, &log)?);
        }
        Command::Evaluate { forecast } => {
            let cfg = load_config(cli)?;
            let dir = forecast.clone().unwrap_or_else(|| cfg.out.join("forecast"));
            let report = cmd_evaluate(&cfg, &dir)?;
            print(&report.aggregate);
        }
        Command::Ablate { axis } => {
            let cfg = load_config(cli)?;
            print(&cmd_ablate(&cfg, *axis, &Parallel, &log)?);
        }
        Command::GradCheck => {
            let g = grad_check_tiny(cli.seed.unwrap_or(0))?;
            print(&g);
            return Ok(g.passed);
        }
        Command::Selftest => {
            let checks = selftest(cli.seed.unwrap_or(0));
            for c in &checks {
                println!("{} {}  {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!(
                "{}",
                serde_json::to_string(&e.record()).unwrap_or_else(|_| e.to_string())
            );
            ExitCode::from(2)
        }
    }
}
