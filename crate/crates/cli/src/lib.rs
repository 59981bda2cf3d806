//! Command-line front end for `lanekit-core`.
//!
//! Exit codes: 0 success, 1 internal error or failed check, 2 usage or input error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lanekit_core::ImageGrid;

pub mod cluster;
pub mod eval;
pub mod gradcheck;
pub mod synth;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or flag combinations.
    #[error("{0}")]
    Usage(String),
    /// Input files missing, unreadable or malformed.
    #[error("{0}")]
    Input(String),
    /// A check ran and failed.
    #[error("{0}")]
    CheckFailed(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => 2,
            CliError::CheckFailed(_) | CliError::Internal(_) => 1,
        }
    }
}

impl From<lanekit_core::FormatError> for CliError {
    fn from(e: lanekit_core::FormatError) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "lanekit",
    version,
    about = "Lane-instance evaluation, clustering and synthesis tools"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score TuSimple JSON-lines predictions against ground truth.
    EvalTusimple(eval::TusimpleArgs),
    /// Score CULane .lines.txt predictions against ground truth, per category.
    EvalCulane(eval::CulaneArgs),
    /// Group lane-pixel embeddings into instances.
    Cluster(cluster::ClusterArgs),
    /// Compare analytic loss gradients with central finite differences.
    GradCheck(gradcheck::GradCheckArgs),
    /// Write a synthetic corpus with ground truth, predictions and embeddings.
    Synth(synth::SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ThreadArgs {
    /// Worker threads [default: all cores]. Results do not depend on it.
    #[arg(long, env = "LANEKIT_THREADS")]
    pub threads: Option<usize>,
}

impl ThreadArgs {
    /// Runs `f` inside a pool of the requested size.
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.threads {
            if n == 0 {
                return Err(CliError::Usage("--threads must be at least 1".into()));
            }
            builder = builder.num_threads(n);
        }
        let pool = builder
            .build()
            .map_err(|e| CliError::Internal(format!("cannot start worker pool: {e}")))?;
        Ok(pool.install(f))
    }
}

/// Which benchmark layout `synth` writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorpusFormat {
    Tusimple,
    Culane,
    Both,
}

pub fn parse_grid(s: &str) -> Result<ImageGrid, String> {
    s.parse::<ImageGrid>().map_err(|e| e.to_string())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::EvalTusimple(a) => eval::run_tusimple(&a).map(|_| ()),
        Command::EvalCulane(a) => eval::run_culane(&a).map(|_| ()),
        Command::Cluster(a) => cluster::run(&a).map(|_| ()),
        Command::GradCheck(a) => gradcheck::run(&a).map(|_| ()),
        Command::Synth(a) => synth::run(&a).map(|_| ()),
    }
}

/// Output directory flag shared by the evaluation commands.
#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Directory for report.txt and report.json; the table is always printed.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
