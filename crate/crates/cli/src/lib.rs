//! Command-line driver for PS-PPI: simulation sweeps, estimation on CSV
//! datasets, and text rendering of summary tables.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | estimation or input-data error |
//! | 2 | at least one simulated scenario produced no usable replicate for some method |
//! | 3 | configuration error |
//! | 4 | file-system error |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use psppi_core::{CovariancePath, MeatMode};

pub mod config;
pub mod estimate;
pub mod render;
pub mod simulate;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(psppi_core::Error),
    #[error("scenarios without a successful replicate: {}", .0.join("; "))]
    ScenarioFailed(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(psppi_core::Error::Io(_)) | CliError::Io(_) => 4,
            CliError::Core(psppi_core::Error::Config(_)) | CliError::Config(_) => 3,
            CliError::ScenarioFailed(_) => 2,
            CliError::Core(_) => 1,
        }
    }
}

impl From<psppi_core::Error> for CliError {
    fn from(e: psppi_core::Error) -> Self {
        CliError::Core(e)
    }
}

pub(crate) fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "psppi", version, about = "Prediction-powered inference for nonmonotone missing data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker threads for concurrent replicates (default: available parallelism).
    #[arg(long, global = true, env = "PSPPI_THREADS")]
    pub threads: Option<usize>,
    /// Keep stdout silent and log only warnings.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Directory receiving output files.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation scenario grid and write its summary CSV.
    Simulate(SimulateArgs),
    /// Estimate a regression on a CSV dataset with predictions.
    Estimate(EstimateArgs),
    /// Render a summary CSV as text tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// `section.key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Also write one row per replicate, method and coefficient.
    #[arg(long)]
    pub dump_replicates: bool,
    /// Export replicate 0 of the first setting as estimate-ready files.
    #[arg(long)]
    pub dump_one: bool,
    #[arg(long, value_parser = parse_path)]
    pub covariance_path: Option<CovariancePath>,
    #[arg(long, value_parser = parse_meat)]
    pub meat_mode: Option<MeatMode>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Observed data; empty cells are missing.
    pub data: PathBuf,
    /// Predictions with the same header and row order as the data.
    pub predictions: PathBuf,
    /// Propensity spec; coefficients present means a known model.
    pub propensity: PathBuf,
    /// Regression model spec.
    pub model: PathBuf,
    #[arg(long, value_parser = parse_path, default_value = "jackknife")]
    pub covariance_path: CovariancePath,
    #[arg(long, value_parser = parse_meat, default_value = "ipw")]
    pub meat_mode: MeatMode,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub summary: PathBuf,
}

fn parse_path(s: &str) -> Result<CovariancePath, String> {
    s.parse().map_err(|_| format!("expected jackknife or closed_form, got `{s}`"))
}

fn parse_meat(s: &str) -> Result<MeatMode, String> {
    s.parse().map_err(|_| format!("expected ipw or paper, got `{s}`"))
}

/// Record of one run, written next to its outputs.
#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    pub command: String,
    pub seed: Option<u64>,
    pub threads: usize,
    pub config: Vec<(String, String)>,
    pub artifacts: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "command = {}", self.command);
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed = {seed}");
        }
        let _ = writeln!(out, "threads = {}", self.threads);
        let _ = writeln!(out, "wall_clock_seconds = {:.3}", self.wall_clock_seconds);
        for (k, v) in &self.config {
            let _ = writeln!(out, "config.{k} = {v}");
        }
        for a in &self.artifacts {
            let _ = writeln!(out, "artifact = {}", a.display());
        }
        out
    }

    /// Writes `manifest.txt` into `dir` after checking every artifact exists.
    pub fn write(&mut self, dir: &Path, started: Instant) -> Result<PathBuf, CliError> {
        self.wall_clock_seconds = started.elapsed().as_secs_f64();
        if let Some(missing) = self.artifacts.iter().find(|a| !a.exists()) {
            return Err(CliError::Io(format!("artifact {} was not written", missing.display())));
        }
        let path = dir.join("manifest.txt");
        std::fs::write(&path, self.render()).map_err(io_err(&path))?;
        Ok(path)
    }
}

/// Parses arguments already split from the command line and runs them.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let threads = cli.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Simulate(args) => simulate::cmd_simulate(args, &cli, threads),
        Command::Estimate(args) => estimate::cmd_estimate(args, &cli, threads),
        Command::Report(args) => render::cmd_report(args, &cli),
    })
}

pub(crate) fn out_dir(cli: &Cli) -> Result<PathBuf, CliError> {
    let dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    Ok(dir)
}
