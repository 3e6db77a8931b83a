//! `patchwise`: generate corpora, profile, train, forecast, evaluate and
//! analyze from the command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand, ValueEnum};
use patchwise_core::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "patchwise", version, about = "Multi-granularity patch forecasting toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Plain-text `key = value` run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for per-series and per-example work (default 1).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalyzeMode {
    Routing,
    Shuffle,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus as JSON lines.
    Generate {
        #[arg(long)]
        count: Option<usize>,
        /// Fraction of industrial (machine-cycle) series.
        #[arg(long)]
        industrial_fraction: Option<f64>,
        #[arg(long)]
        length: Option<usize>,
    },
    /// Sliding-window spectral entropy per series.
    Profile {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        remove_mean: bool,
    },
    /// Train a model; writes checkpoints and a JSON-lines loss log.
    Train {
        /// Series files (JSON lines or CSV); repeatable.
        #[arg(long)]
        data: Vec<PathBuf>,
        /// Generate this many synthetic series when no data is given.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Continue from a training checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Quantile forecasts for every series in a file.
    Forecast {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Score a model (and always seasonal naive) on held-out windows.
    Eval {
        /// Without a checkpoint only the seasonal-naive row is produced.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// One task per file; repeatable.
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        m_seas: Option<usize>,
        #[arg(long)]
        windows: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Routing patch-size maps or the rotary modulation shuffle comparison.
    Analyze {
        #[arg(long)]
        checkpoint: PathBuf,
        /// One dataset per file; repeatable.
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "routing")]
        mode: AnalyzeMode,
        /// Donor series for the inter-dataset condition.
        #[arg(long)]
        donors: Option<PathBuf>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        m_seas: Option<usize>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::NonFiniteLoss { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
