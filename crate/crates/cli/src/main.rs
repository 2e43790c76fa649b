//! `ergodiff` — experiment runner for temporo-spatial differentiation:
//! window averages along averaging-set schedules composed with conditional
//! averages over shrinking regions, with certified error envelopes.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::debug;

use ergodiff_cli::commands::{
    apply_overrides, cmd_counterexample, cmd_decay_check, cmd_gauge, cmd_run_tsd, cmd_sweep,
    CliError, Invocation,
};
use ergodiff_cli::config::ExperimentConfig;

const AFTER_HELP: &str = "\
ARTIFACT COLUMNS:
  trace CSV (run-tsd, counterexample):
    k                  averaging-set index
    F_size             |F_k|: elements of the averaging set, with multiplicity
    mu_C               model mass of the spatial region C_k
    diam               diameter bound of C_k
    pointwise_re, pointwise_im
                       window average at the base point
    spatial_re, spatial_im
                       conditional average of the window average over C_k
    gap                |pointwise - spatial|
    bound              certified envelope for the gap (inf when the region
                       carries no smoothness certificate)
  decay CSV (run-tsd, decay-check):
    delta              decay test level
    k                  averaging-set index
    offending_fraction fraction of the averaging set whose distorted region
                       diameter exceeds delta

EXIT CODES:
  0   all verdicts pass
  1   a verdict failed (e.g. a bound violation)
  2   hypothesis unmet (diameter decay, region mass, sign preconditions);
      takes precedence over verdict failures in multi-experiment runs
  3   no counterexample at the requested tolerances
  64  malformed configuration (parse or resolution failure)

ENVIRONMENT:
  ERGODIFF_LOG       log level (error, warn, info, debug, trace)";

/// Temporo-spatial differentiation laboratory.
#[derive(Parser)]
#[command(name = "ergodiff", version, about, after_help = AFTER_HELP)]
struct Cli {
    /// Path to the experiment config (TOML; `.json` files are read as JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts (overrides the config's output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed override for randomized measure backends.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for multi-experiment commands (numeric output is
    /// identical for every thread count).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Window override: run at marks 1..=k-max.
    #[arg(long, global = true)]
    k_max: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Differentiation trace: decay gate, then gap and bound at every mark.
    RunTsd,
    /// Sup-norm gauge estimate with orbit-oracle and constancy probes.
    Gauge,
    /// Build and replay a divergent-region plan.
    Counterexample,
    /// Diameter-decay hypothesis test alone.
    DecayCheck,
    /// Cartesian parameter grid of differentiation runs.
    Sweep,
}

fn run(cli: Cli) -> Result<i32, CliError> {
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            debug!("thread pool already initialized: {e}");
        }
    }
    let path = cli.config.ok_or_else(|| {
        ergodiff_cli::config::ConfigError("--config PATH is required".into())
    })?;
    let mut config = ExperimentConfig::from_path(&path)?;
    apply_overrides(&mut config, cli.seed, cli.k_max);
    let canonical = config.canonical_toml()?;
    let out_dir = cli
        .out
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let default_stem = match cli.command {
        Command::RunTsd => "run-tsd",
        Command::Gauge => "gauge",
        Command::Counterexample => "counterexample",
        Command::DecayCheck => "decay-check",
        Command::Sweep => "sweep",
    };
    let stem = config
        .output
        .stem
        .clone()
        .unwrap_or_else(|| default_stem.to_string());
    let inv = Invocation {
        config,
        out_dir,
        stem,
        canonical,
    };
    match cli.command {
        Command::RunTsd => cmd_run_tsd(&inv),
        Command::Gauge => cmd_gauge(&inv),
        Command::Counterexample => cmd_counterexample(&inv),
        Command::DecayCheck => cmd_decay_check(&inv),
        Command::Sweep => cmd_sweep(&inv),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ERGODIFF_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("ergodiff: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
