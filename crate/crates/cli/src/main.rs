//! `octa`: phantom generation, OCTA estimation, MAP reconstruction and
//! evaluation from the command line.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or I/O error, 4 divergence.

mod commands;
mod config;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use octa_core::eval::{SlabSpec, DEFAULT_BACKGROUND_THRESHOLD, DEFAULT_PERCENTILE};
use octa_core::phantom;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Diverged(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Diverged(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Diverged(m) => write!(f, "{m}"),
        }
    }
}

impl From<octa_core::Error> for CliError {
    fn from(e: octa_core::Error) -> Self {
        use octa_core::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidParameter(_) | E::InvalidDims(_) => CliError::Usage(msg),
            E::Diverged { .. } => CliError::Diverged(msg),
            _ => CliError::Data(msg),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "octa", version, about = "OCTA MAP reconstruction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a vessel phantom and simulate repeated scans of it.
    Phantom(PhantomArgs),
    /// Closed-form OCTA estimate of a repeat volume.
    Octa(OctaArgs),
    /// MAP reconstruction with a periodic regularizer.
    Recon(Box<ReconArgs>),
    /// Percentile projection of a slab, exported as PNG.
    Enface(EnfaceArgs),
    /// PSNR and SSIM of a volume or image against a reference.
    Compare(CompareArgs),
    /// 3x3x3 median filter.
    Median(MedianArgs),
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Cubic scene extent.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Explicit extents `BxAxS`, overriding --size.
    #[arg(long)]
    pub shape: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = phantom::DEFAULT_VESSELS)]
    pub vessels: usize,
    #[arg(long, default_value_t = phantom::DEFAULT_VESSEL_VARIANCE)]
    pub vessel_variance: f64,
    #[arg(long, default_value_t = phantom::DEFAULT_BACKGROUND_VARIANCE)]
    pub background_variance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RepeatArgs {
    /// Repeats to use: `all`, `3`, `5` (patterns over 10 repeats) or
    /// comma-separated indices.
    #[arg(long, default_value = "all")]
    pub use_repeats: String,
    /// Scale amplitudes by their 99.9th percentile before estimation.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Args)]
pub struct OctaArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub repeats: RepeatArgs,
}

#[derive(Debug, Args)]
pub struct ReconArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// TOML file with reconstruction settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    /// none, wavelet or tv.
    #[arg(long = "reg")]
    pub regularizer: Option<String>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub n_iter: Option<usize>,
    #[arg(long)]
    pub n_reg: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub threshold_mode: Option<String>,
    #[arg(long)]
    pub tv_weight: Option<f64>,
    #[arg(long)]
    pub tv_inner_iterations: Option<usize>,
    #[arg(long)]
    pub stop_tol: Option<f64>,
    #[arg(long)]
    pub floor: Option<f64>,
    #[arg(long)]
    pub overshoot_guard: Option<bool>,
    /// Ground-truth volume; adds PSNR and SSIM columns to the trace.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Depth slab `top:bottom` for the trace metrics (default: full depth).
    #[arg(long)]
    pub slab: Option<SlabSpec>,
    #[arg(long, default_value_t = DEFAULT_PERCENTILE)]
    pub percentile: f64,
    #[command(flatten)]
    pub repeats: RepeatArgs,
}

#[derive(Debug, Args)]
pub struct EnfaceArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub slab: Option<SlabSpec>,
    #[arg(long, default_value_t = DEFAULT_PERCENTILE)]
    pub percentile: f64,
    /// Relative background threshold applied before export.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = 8)]
    pub bit_depth: u8,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Volume or PNG to evaluate.
    pub candidate: PathBuf,
    /// Reference of the same kind.
    pub reference: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub slab: Option<SlabSpec>,
    #[arg(long, default_value_t = DEFAULT_PERCENTILE)]
    pub percentile: f64,
    #[arg(long, default_value_t = DEFAULT_BACKGROUND_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct MedianArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Phantom(a) => commands::phantom(a),
        Command::Octa(a) => commands::octa(a),
        Command::Recon(a) => commands::recon(a),
        Command::Enface(a) => commands::enface(a),
        Command::Compare(a) => commands::compare(a),
        Command::Median(a) => commands::median(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("octa: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
