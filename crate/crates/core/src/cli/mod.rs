//! Command-line front end.
//!
//! ```text
//! pisr search    [--config F] [--seed N] [--workers N] [--dataset F] [--out DIR]
//! pisr eval      [--config F] [--candidate F] [--dataset F] [--out DIR] [--fit]
//! pisr gen-data  [--config F] [--candidate F] --out FILE
//! pisr plot-data [--config F] [--candidate F] [--dataset F] --out FILE
//! pisr resume    [--checkpoint F] [--out DIR] [--max-evaluations N]
//! ```
//!
//! Exit status is 0 iff an accepted artifact was written.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use commands::{format_report, GOLDEN_JSON};
pub use config::RunConfig;

pub const BEST_CANDIDATE: &str = "best_candidate.json";
pub const LOSS_REPORT: &str = "loss_report.json";
pub const TRACE: &str = "trace.csv";
pub const EFFECTIVE_CONFIG: &str = "config.toml";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("search error: {0}")]
    Search(String),
    #[error("{0}")]
    NoResult(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::NoResult(_) => 1,
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Io(_) => 3,
            CliError::Search(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pisr", version, about = "Physics-informed symbolic regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset CSV with header `x,density,a`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured search and write the best candidate.
    Search {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a candidate and print the per-term table.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Candidate JSON; the bundled reference solution when omitted.
        #[arg(long)]
        candidate: Option<PathBuf>,
        /// Directory for the loss report.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Refit the constants before scoring.
        #[arg(long)]
        fit: bool,
    },
    /// Sample a candidate on the grid and write a dataset CSV.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        candidate: Option<PathBuf>,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Write model and data curves side by side for plotting.
    PlotData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        candidate: Option<PathBuf>,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Continue an annealing run from its checkpoint.
    Resume {
        /// Checkpoint JSON; `<out>/checkpoint.json` when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// New total evaluation budget.
        #[arg(long)]
        max_evaluations: Option<u64>,
    },
}

/// Parses `args` and runs the command. Returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("pisr: {e}");
            e.exit_code()
        }
    }
}
