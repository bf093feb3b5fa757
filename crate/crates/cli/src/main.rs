use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chargehub::data::{synth, RunConfig};
use chargehub::mpc::ControllerKind;
use chargehub::pipeline::{self, Prepared};
use chargehub::{Error, Result};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};

/// Forecasting and model predictive control for a battery-buffered EV
/// charging hub.
#[derive(Debug, Parser)]
#[command(name = "chargehub", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a run configuration and its input data.
    Validate {
        #[arg(short, long, env = "CHARGEHUB_CONFIG")]
        config: PathBuf,
    },
    /// Fit the EV, PV and price forecasters and save them under models/.
    Train {
        #[arg(short, long, env = "CHARGEHUB_CONFIG")]
        config: PathBuf,
    },
    /// Score day-ahead forecasts on the test days (nMAE and coverage).
    EvalForecasts {
        #[arg(short, long, env = "CHARGEHUB_CONFIG")]
        config: PathBuf,
    },
    /// Run closed-loop episodes for one controller.
    Simulate {
        #[arg(short, long, env = "CHARGEHUB_CONFIG")]
        config: PathBuf,
        /// omniscient, deterministic, stochastic or recourse.
        #[arg(long)]
        controller: ControllerKind,
        /// Only the first N test days.
        #[arg(long)]
        days: Option<usize>,
    },
    /// Build cost, emission and runtime tables from episode results.
    Report {
        /// Episode JSON files or directories containing them.
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(short, long, default_value = "reports")]
        out: PathBuf,
    },
    /// Write a synthetic dataset and a matching configuration file.
    Synth {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 120)]
        days: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn load(config: &Path) -> Result<Prepared> {
    pipeline::prepare(RunConfig::load(config)?)
}

fn run(cmd: Command) -> Result<Value> {
    match cmd {
        Command::Validate { config } => {
            let p = load(&config)?;
            let test_days = p.config.test_days(&p.bundle)?;
            let split = pipeline::train_split(&p.config, p.bundle.n_days())?;
            Ok(json!({
                "valid": true,
                "days": p.bundle.n_days(),
                "first_timestamp": p.bundle.calendar.datetime(0).to_string(),
                "train_split": split,
                "test_days": test_days,
                "controllers": p.config.evaluation.controllers,
            }))
        }
        Command::Train { config } => {
            let p = load(&config)?;
            let (f, path) = pipeline::train(&p)?;
            Ok(json!({
                "model": path,
                "half_widths": {
                    "ev": f.ev.half_width(),
                    "pv": f.pv.half_width(),
                    "price": f.price.half_width(),
                },
            }))
        }
        Command::EvalForecasts { config } => {
            let p = load(&config)?;
            Ok(serde_json::to_value(pipeline::eval_forecasts(&p)?)?)
        }
        Command::Simulate { config, controller, days } => {
            let p = load(&config)?;
            Ok(serde_json::to_value(pipeline::simulate(&p, controller, days)?)?)
        }
        Command::Report { results, out } => {
            let eval = pipeline::report(&results, &out)?;
            Ok(json!({ "out": out, "cost_normalized": eval.cost_normalized, "runtime_normalized": eval.runtime_normalized }))
        }
        Command::Synth { seed, days, out } => {
            let b = synth(seed, days)?;
            let paths = b.write_csv(&out.join("data"))?;
            let mut cfg = RunConfig::from_toml("[data]\nquarter_hourly = \"data/quarter_hourly.csv\"\nhourly = \"data/hourly.csv\"\n")?;
            cfg.seed = seed;
            cfg.output.dir = PathBuf::from("out");
            let config = out.join("chargehub.toml");
            std::fs::write(&config, cfg.to_toml()).map_err(|e| Error::io(&config, e))?;
            Ok(json!({ "config": config, "quarter_hourly": paths.quarter_hourly, "hourly": paths.hourly, "days": days }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("CHARGEHUB_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json output"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
