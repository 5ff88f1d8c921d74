//! `ivgl`: fit IVGL, IVGL-S and their baselines on CSV data, screen
//! instruments, build Laplacians and run simulation sweeps.

mod commands;
mod io;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Problem with the user's flags or input files; exits with status 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

#[derive(Parser, Debug)]
#[command(name = "ivgl", version, about = "Network-aware instrumental-variable regression")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo sweep over (si, s0) cells; writes summary, per-replicate and MCC tables.
    Simulate(SimulateArgs),
    /// Fit one estimator to CSV data and write the result as JSON.
    Fit(FitArgs),
    /// Rank instruments by absolute correlation with the average exposure.
    Screen(ScreenArgs),
    /// Build a graph Laplacian and write it as CSV.
    Laplacian(LaplacianArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
pub enum SetupArg {
    #[value(name = "1")]
    #[serde(rename = "1")]
    One,
    #[value(name = "2")]
    #[serde(rename = "2")]
    Two,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Normalized,
    Unnormalized,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExposureArg {
    Fitted,
    Raw,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub setup: SetupArg,
    /// Signal multipliers; several values run a sweep.
    #[arg(long, value_delimiter = ',', required = true)]
    pub si: Vec<f64>,
    /// Active-set sizes; several values run a sweep.
    #[arg(long, value_delimiter = ',', required = true)]
    pub s0: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Base seed; replicate r uses seed + r. IVGL_SEED overrides it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated subset of gl, ivl, ivgl, ivgls.
    #[arg(long, default_value = "ivl,ivgl")]
    pub methods: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write every replicate's data under OUT/data.
    #[arg(long)]
    pub dump_data: bool,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    /// Setup 2: draw node coordinates once from this seed.
    #[arg(long)]
    pub fixed_graph_seed: Option<u64>,
    #[arg(long, value_enum, default_value = "fitted")]
    pub exposure_design: ExposureArg,
    #[arg(long, default_value_t = 30)]
    pub max_alt_iters: usize,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct GraphArgs {
    /// Edge list, `src dst [weight]` per line with 1-based indices.
    #[arg(long, conflicts_with = "coords")]
    pub edges: Option<PathBuf>,
    /// Node coordinates (three columns); nodes closer than --threshold are joined.
    #[arg(long, requires = "threshold")]
    pub coords: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub z: Option<PathBuf>,
    #[command(flatten)]
    pub graph: GraphArgs,
    /// One of gl, ivl, ivgl, ivgls.
    #[arg(long)]
    pub method: String,
    #[arg(long, value_enum, default_value = "normalized")]
    pub laplacian: KindArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for fold assignment. IVGL_SEED overrides it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Graph-penalty grid searched by cross-validation.
    #[arg(long, value_delimiter = ',')]
    pub lambda2_grid: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "fitted")]
    pub exposure_design: ExposureArg,
    #[arg(long, default_value_t = 30)]
    pub max_alt_iters: usize,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct ScreenArgs {
    #[arg(long)]
    pub z: PathBuf,
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long, default_value_t = 300)]
    pub top: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct LaplacianArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Node count for an edge list (defaults to the largest index used).
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long, value_enum, default_value = "normalized")]
    pub kind: KindArg,
    #[arg(long)]
    pub out: PathBuf,
}

fn is_input_error(err: &anyhow::Error) -> bool {
    use ivgl::Error as E;
    err.chain().any(|e| {
        e.is::<InputError>()
            || matches!(
                e.downcast_ref::<E>(),
                Some(E::InvalidInput(_) | E::DimensionMismatch(_) | E::InvalidGraph(_))
            )
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Screen(a) => commands::screen(a),
        Command::Laplacian(a) => commands::laplacian(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_input_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
