mod commands;
mod config;
mod error;
mod output;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{Overrides, RunConfig};
use crate::error::CliError;

/// Multi-factor stock selection with LASSO screening, entropy-weighted
/// factor synthesis and IC-weighted model ensembles.
#[derive(Parser)]
#[command(name = "ensemble-alpha", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated model and scheme names, e.g. `Ridge,IC_Mean`.
    #[arg(long, global = true, value_delimiter = ',')]
    schemes: Option<Vec<String>>,
    /// Stocks held each month.
    #[arg(long = "top-n", global = true)]
    top_n: Option<usize>,
    /// Transaction cost rate charged on turnover.
    #[arg(long = "cost-rate", global = true)]
    cost_rate: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic panel.
    Synth,
    /// Preprocess a panel and run LASSO factor screening.
    Screen,
    /// Run the walk-forward backtest for every requested strategy.
    Backtest {
        /// Also compare IC_Mean with and without screening.
        #[arg(long)]
        compare_screening: bool,
    },
    /// Verify an output directory and print its summary table.
    Report,
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("ENSEMBLE_ALPHA_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|n| *n >= 1).ok_or_else(|| {
        CliError::Config(format!(
            "ENSEMBLE_ALPHA_THREADS must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        out: cli.out,
        schemes: cli.schemes,
        top_n: cli.top_n,
        cost_rate: cli.cost_rate,
    });
    match cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Screen => commands::screen(&cfg),
        Command::Backtest { compare_screening } => commands::backtest(&cfg, compare_screening),
        Command::Report => commands::report(&cfg.output.dir),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}
