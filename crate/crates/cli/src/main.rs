use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};

use hpmpc_cli::commands::{self, PolicyChoice};
use hpmpc_cli::config::RunConfig;

/// Model predictive control of an air-source heat pump with auxiliary
/// resistance elements.
#[derive(Debug, Parser)]
#[command(name = "hpmpc", version)]
struct Cli {
    /// Run configuration (TOML). Defaults to the built-in profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `paths.out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyArg {
    Mpc,
    Baseline,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the thermal model and disturbance regressor from training data.
    Identify,
    /// Solve one planning problem and write the horizon plan.
    Plan {
        /// Plan start, `YYYY-MM-DDTHH:MM:SS`; defaults to the scenario start.
        #[arg(long)]
        start: Option<String>,
        /// Initial indoor temperature, C.
        #[arg(long)]
        t0: Option<f64>,
    },
    /// Run one closed-loop simulation.
    Simulate {
        #[arg(long, value_enum, default_value = "mpc")]
        policy: PolicyArg,
    },
    /// Simulate the MPC and the baseline on the same weather and compare them.
    Compare,
    /// Select the discomfort price for one planning instant.
    Tune {
        #[arg(long)]
        start: Option<String>,
    },
    /// Daily aggregation, energy lines and savings from existing traces.
    Analyze {
        /// Trace CSV files written by `simulate` or `compare`.
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Trace to compare the others against.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default_profile()?,
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Command::Plan { t0: Some(t0), .. } = cli.command {
        cfg.scenario.t0 = Some(t0);
    }
    cfg.validate()?;
    let out = cfg.out_dir(cli.out.as_deref());
    let written = match &cli.command {
        Command::Identify => commands::identify(&cfg, &out)?,
        Command::Plan { start, .. } => commands::plan(&cfg, start.as_deref(), &out)?,
        Command::Simulate { policy } => {
            let which = match policy {
                PolicyArg::Mpc => PolicyChoice::Mpc,
                PolicyArg::Baseline => PolicyChoice::Baseline,
            };
            commands::simulate(&cfg, which, &out)?
        }
        Command::Compare => commands::compare(&cfg, &out)?,
        Command::Tune { start } => commands::tune(&cfg, start.as_deref(), &out)?,
        Command::Analyze { traces, baseline } => commands::analyze(&cfg, traces, baseline.as_deref(), &out)?,
    };
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
