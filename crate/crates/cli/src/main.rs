//! `glpm`: generate, tune, fit, diagnose and benchmark from a flat TOML config.
//!
//! Exit status: 0 on success, 2 for invalid configuration or inputs, 3 when a
//! run fails (numerics, I/O while writing results).

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("run failed: {0}")]
    Runtime(String),
}

impl CliError {
    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "glpm", version, about = "Exact MCMC for Gaussian latent position network models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat TOML experiment configuration; every key has a default.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed` in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `out` in the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Draw a synthetic network and write it with its true positions.
    Generate,
    /// Tune step sizes for each sampler in `kinds`.
    Tune,
    /// Run one sampler and write its draws and a run manifest.
    Fit,
    /// Summarize the draws of a previous fit (`fit_dir`).
    Diagnose,
    /// Tune and fit every sampler in `kinds`; report efficiency relative to MwG.
    Benchmark,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = cli.out {
        config.out = out;
    }
    let config = config.resolve()?;
    match cli.command {
        Command::Generate => commands::generate(&config),
        Command::Tune => commands::tune(&config),
        Command::Fit => commands::fit(&config),
        Command::Diagnose => commands::diagnose(&config),
        Command::Benchmark => commands::benchmark(&config),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("glpm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
