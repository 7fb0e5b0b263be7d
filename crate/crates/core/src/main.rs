//! Command-line front end: run seeded experiments, print the oracle
//! equilibrium for a configuration, or validate a configuration file.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cournot_qlearn::config::{ConfigError, ExperimentConfig, Mode};
use cournot_qlearn::experiment::run_experiment;
use cournot_qlearn::nash::analytic_ne;
use cournot_qlearn::output::write_outputs;

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "cournot-qlearn",
    about = "Two-GenCo repeated Cournot market: Q-learning bidders, range-contracting variant, and a Nash oracle",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Path to the JSON configuration file.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment grid and write metrics.csv + summary.json.
    Run {
        #[command(flatten)]
        config: ConfigArg,
        /// Override the configured mode (traditional|dichotomy|both).
        #[arg(long)]
        mode: Option<Mode>,
        /// Override the configured master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured iteration count.
        #[arg(long)]
        iterations: Option<usize>,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the oracle equilibrium for the configured base market as JSON.
    Ne {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Check a configuration file and report the effective settings.
    Validate {
        #[command(flatten)]
        config: ConfigArg,
    },
}

fn config_exit(err: &ConfigError) -> u8 {
    match err {
        ConfigError::Read { .. } => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn load(arg: &ConfigArg) -> Result<ExperimentConfig, u8> {
    ExperimentConfig::load(&arg.config).map_err(|e| {
        eprintln!("error: {e}");
        config_exit(&e)
    })
}

fn cmd_run(
    config: ConfigArg,
    mode: Option<Mode>,
    seed: Option<u64>,
    iterations: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), u8> {
    let mut cfg = load(&config)?;
    if let Some(mode) = mode {
        cfg.mode = mode;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(iterations) = iterations {
        cfg.n_iterations = iterations;
    }
    if let Some(out) = out {
        cfg.out_dir = out;
    }
    cfg.validate().map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })?;
    let result = run_experiment(&cfg).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })?;
    let (metrics, summary) = write_outputs(&result, &cfg.out_dir).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_IO
    })?;
    println!("wrote {}", metrics.display());
    println!("wrote {}", summary.display());
    Ok(())
}

fn cmd_ne(config: ConfigArg) -> Result<(), u8> {
    let cfg = load(&config)?;
    let ne = analytic_ne(&cfg.market_params(), &cfg.genco_params(0), &cfg.genco_params(1))
        .map_err(|e| {
            eprintln!("error: {e}");
            EXIT_CONFIG
        })?;
    let text = serde_json::to_string_pretty(&ne).expect("equilibrium serializes");
    println!("{text}");
    Ok(())
}

fn cmd_validate(config: ConfigArg) -> Result<(), u8> {
    let cfg = load(&config)?;
    println!(
        "ok: mode={} sets={} runs/set={} iterations={} seed={} out={}",
        cfg.mode,
        cfg.n_param_sets,
        cfg.n_runs_per_set,
        cfg.n_iterations,
        cfg.seed,
        cfg.out_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            mode,
            seed,
            iterations,
            out,
        } => cmd_run(config, mode, seed, iterations, out),
        Command::Ne { config } => cmd_ne(config),
        Command::Validate { config } => cmd_validate(config),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
