//! `hartmann-lab`: batch driver for the Prandtl-Hartmann marching
//! laboratory.
//!
//! The binary wraps the solver library in five commands — `steady`,
//! `march`, `ladder`, `check`, and `decay-fit` — all driven by one flat
//! `key = value` configuration file plus a handful of override flags.
//! Exit codes are part of the contract: 0 means the command succeeded and
//! every certificate it evaluated passed, 2 means the computation finished
//! but a certificate or convergence verdict failed, and 1 means the run
//! itself failed (bad configuration, unreadable input, or a solver error).

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{Formats, RunConfig};

/// Errors that abort a command (exit code 1).
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Configuration file or flag problem.
    #[error("configuration error: {0}")]
    Config(String),
    /// Filesystem problem.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// The solver or a diagnostic refused the run.
    #[error("solver error: {0}")]
    Solver(#[from] hartmann_core::Error),
    /// A user-supplied data file is malformed.
    #[error("input error: {0}")]
    Input(String),
}

/// Output format override, mirroring `output.formats`.
#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

impl From<FormatArg> for Formats {
    fn from(value: FormatArg) -> Self {
        match value {
            FormatArg::Csv => Formats::Csv,
            FormatArg::Json => Formats::Json,
            FormatArg::Both => Formats::Both,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "hartmann-lab",
    version,
    about = "Numerical laboratory for the 2-D magnetic Prandtl boundary layer \
             in the Prandtl-Hartmann regime"
)]
struct Cli {
    /// Path to a flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.directory`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed of the randomized Hardy suite (overrides
    /// `diagnostics.hardy_seed`).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Which artifact representations to write (overrides
    /// `output.formats`).
    #[arg(long, global = true, value_enum, value_name = "KIND")]
    format: Option<FormatArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate the closed-form equilibrium on the configured grid.
    Steady,
    /// March the configured initial data; write records and a summary with
    /// decay certificates.
    March,
    /// Run the epsilon ladder and report convergence to the degenerate
    /// problem.
    Ladder,
    /// Check wall compatibility of the initial data and run the randomized
    /// Hardy-inequality suite.
    Check,
    /// Refit decay rates from an archived records table.
    DecayFit {
        /// Records CSV produced by a previous `march`.
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
    },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            RunConfig::from_text(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(dir) = cli.out {
        cfg.directory = dir;
    }
    if let Some(seed) = cli.seed {
        cfg.hardy_seed = seed;
    }
    if let Some(format) = cli.format {
        cfg.formats = format.into();
    }
    cfg.validate()?;
    match cli.command {
        Command::Steady => commands::cmd_steady(&cfg),
        Command::March => commands::cmd_march(&cfg),
        Command::Ladder => commands::cmd_ladder(&cfg),
        Command::Check => commands::cmd_check(&cfg),
        Command::DecayFit { input } => commands::cmd_decay_fit(&cfg, &input),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(u8::try_from(code).expect("small exit codes")),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
