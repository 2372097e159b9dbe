//! `modalem` command-line tool: fit mixtures, find modes, cluster, and emit
//! plot data.

mod commands;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    /// Bad input or flags; exit code 2.
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    /// Failure inside a computation; exit code 3.
    pub fn compute(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<modalem::Error> for CliError {
    fn from(e: modalem::Error) -> Self {
        use modalem::Error as E;
        match e {
            E::Validation { .. }
            | E::DimensionMismatch { .. }
            | E::UnsupportedDimension { .. }
            | E::UnsupportedModel(_)
            | E::Json(_)
            | E::Io(_) => Self::input(e.to_string()),
            _ => Self::compute(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "modalem", version, about = "Modes and modal clustering of Gaussian mixtures")]
pub struct Cli {
    /// Directory for output files (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit Gaussian mixtures by EM and keep the best BIC. Writes model.json
    /// and fit_report.json.
    Fit(FitArgs),
    /// Run Modal EM from every data point and cluster by mode. Writes
    /// partition.csv, modes.json, manifest.json and optionally paths.csv.
    Cluster(ClusterArgs),
    /// Log-density of a bivariate model over a lattice. Writes grid.csv.
    DensityGrid(DensityGridArgs),
    /// Domains of attraction of a bivariate model over a lattice. Writes
    /// regions.csv.
    PartitionGrid(PartitionGridArgs),
    /// Generate a synthetic sample. Writes data.csv and truth.csv.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Numeric CSV, one observation per row.
    pub data: PathBuf,
    /// Comma-separated covariance models (EII, VII, EEI, VVI, EEE, VVV).
    #[arg(long, default_value = "EII,VII,EEI,VVI,EEE,VVV")]
    pub models: String,
    /// Numbers of components: "3", "1:9", "1,2,4" or a mix like "1:3,5".
    #[arg(long, default_value = "1:9")]
    pub components: String,
    /// Seed for k-means++ starts.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// EM starts per (G, model) pair.
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    /// Relative log-likelihood change that stops EM.
    #[arg(long, default_value_t = 1e-8)]
    pub em_tol: f64,
    /// EM iteration cap.
    #[arg(long, default_value_t = 500)]
    pub em_max_iter: usize,
}

#[derive(Args, Debug, Clone)]
pub struct MemArgs {
    /// Relative per-coordinate change that marks a point converged.
    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,
    /// Iteration cap.
    #[arg(long, default_value_t = 1000)]
    pub max_iter: usize,
    /// Take full M-step jumps instead of the 1 - exp(-beta t) schedule.
    #[arg(long)]
    pub no_damping: bool,
    /// Rate of the step-size schedule.
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    /// Distance below which converged points share a mode; defaults to
    /// 1e-2 times the root mean marginal variance.
    #[arg(long)]
    pub merge_tol: Option<f64>,
    /// Volume estimate used to drop low-density modes.
    #[arg(long, value_enum, default_value_t = DenoiseArg::Gaussian)]
    pub denoise: DenoiseArg,
    /// Tail probability outside the Gaussian ellipsoid.
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenoiseArg {
    None,
    Gaussian,
    Databox,
    Pcabox,
    Min,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    /// Model JSON, e.g. from `modalem fit`.
    pub model: PathBuf,
    /// Numeric CSV with the model's dimension.
    pub data: PathBuf,
    #[command(flatten)]
    pub mem: MemArgs,
    /// Also write paths.csv with every point's position at each iteration.
    #[arg(long)]
    pub paths: bool,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    /// Lattice extent "xmin,xmax,ymin,ymax"; defaults to the marginal mean
    /// plus or minus three marginal standard deviations.
    #[arg(long, allow_hyphen_values = true)]
    pub bounds: Option<String>,
    /// Nodes per axis, "n" or "nx,ny".
    #[arg(long, default_value = "100")]
    pub resolution: String,
}

#[derive(Args, Debug)]
pub struct DensityGridArgs {
    pub model: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug)]
pub struct PartitionGridArgs {
    pub model: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub mem: MemArgs,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Generator: gauss-skewnormal or separated-gaussians.
    pub name: String,
    /// Sample size.
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skew-normal shape "a,b" (gauss-skewnormal).
    #[arg(long, default_value = "5,1", allow_hyphen_values = true)]
    pub skew: String,
    /// Number of components (separated-gaussians).
    #[arg(long, default_value_t = 3)]
    pub components: usize,
    /// Dimension (separated-gaussians).
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Minimum mean separation in component standard deviations
    /// (separated-gaussians).
    #[arg(long, default_value_t = 10.0)]
    pub sep: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
