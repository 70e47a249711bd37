//! `scss`: bound evaluation, assumption checks and SepIt simulation from the
//! command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "scss", version, about = "SDR upper bound and SepIt refinement for single-channel separation")]
pub struct Cli {
    /// Seed for every random stream; a fresh one is drawn and recorded when omitted.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "SCSS_WORKERS", default_value_t = 0)]
    pub workers: usize,
    /// Directory for all outputs.
    #[arg(long, global = true, env = "SCSS_OUT_DIR", default_value = "scss-out")]
    pub out_dir: PathBuf,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compare pooled short-segment amplitudes with fitted Laplace and normal laws.
    ValidateLaplace(LaplaceArgs),
    /// Monte-Carlo density of the first mixing coefficient.
    CoeffPdf(CoeffArgs),
    /// SDR upper bound for each speaker count.
    Bound(BoundArgs),
    /// Segment mutual information terms, or binned MI between two recordings.
    Mi(MiArgs),
    /// Train SepIt blocks on synthetic mixtures and evaluate the stopping rule.
    Simulate(SimulateArgs),
    /// Inspect or clear the conditional-table cache.
    Cache(CacheArgs),
}

#[derive(Args, Debug)]
pub struct LaplaceArgs {
    /// Directory of PCM16 WAV files; a synthetic Laplace corpus is used when omitted.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// JSON object mapping file paths to speaker ids.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Signals in the synthetic corpus.
    #[arg(long, default_value_t = 25)]
    pub signals: usize,
    /// Length of each synthetic signal in seconds.
    #[arg(long, default_value_t = 4.0)]
    pub duration_s: f64,
    #[arg(long, default_value_t = 8000.0)]
    pub sample_rate: f64,
    #[arg(long, default_value_t = 20.0)]
    pub window_ms: f64,
    #[arg(long, default_value_t = 201)]
    pub bins: usize,
    /// Segment scaling before pooling: per-segment or none.
    #[arg(long, default_value = "per-segment")]
    pub norm: String,
}

#[derive(Args, Debug)]
pub struct CoeffArgs {
    /// Speaker counts, comma separated.
    #[arg(long = "c", value_delimiter = ',', default_value = "2,3,5,10")]
    pub c: Vec<usize>,
    #[arg(long, default_value_t = 1_000_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    /// Also report the largest density change when the trial count doubles.
    #[arg(long)]
    pub convergence: bool,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    #[arg(long, default_value_t = 1_000_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 512)]
    pub m_bins: usize,
    #[arg(long, default_value_t = 8.0)]
    pub m_range: f64,
    #[arg(long, default_value_t = 256)]
    pub v0_bins: usize,
    #[arg(long, default_value_t = 8.0)]
    pub v0_range: f64,
    #[arg(long, default_value_t = 64)]
    pub a0_bins: usize,
    /// Cache directory for conditional tables (default: <out-dir>/cache).
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Rebuild tables without reading or writing the cache.
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Args, Debug)]
pub struct BoundArgs {
    #[arg(long = "c", value_delimiter = ',', default_value = "2,3,5,10")]
    pub c: Vec<usize>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// joint, marginal or literal.
    #[arg(long, default_value = "joint")]
    pub form: String,
    /// nats or bits.
    #[arg(long, default_value = "nats")]
    pub unit: String,
    /// unit-source or weighted-target.
    #[arg(long, default_value = "unit-source")]
    pub variance: String,
    #[arg(long, default_value_t = 4.0)]
    pub signal_s: f64,
    #[arg(long, default_value_t = 20.0)]
    pub window_ms: f64,
    #[arg(long, default_value_t = 8000.0)]
    pub sample_rate: f64,
    /// Also run the doubled-grid stability check for each C.
    #[arg(long)]
    pub refine_check: bool,
}

#[derive(Args, Debug)]
pub struct MiArgs {
    #[arg(long = "c", value_delimiter = ',', default_value = "2,3,5,10")]
    pub c: Vec<usize>,
    #[command(flatten)]
    pub grid: GridArgs,
    /// First recording for binned MI; switches to the two-file mode.
    #[arg(long, requires = "y")]
    pub x: Option<PathBuf>,
    #[arg(long, requires = "x")]
    pub y: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub bins: usize,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long = "c", default_value_t = 2)]
    pub c: usize,
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 5)]
    pub max_iter: usize,
    /// Adam steps per block.
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.95)]
    pub lr_decay: f64,
    #[arg(long, default_value_t = 100)]
    pub steps_per_epoch: usize,
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
    /// Training crop in samples.
    #[arg(long, default_value_t = 512)]
    pub crop: usize,
    #[arg(long, default_value_t = 32)]
    pub mi_bins: usize,
    #[arg(long)]
    pub share_weights: bool,
    #[arg(long, default_value_t = 10.0)]
    pub interference_db: f64,
    /// iid-laplace or ar-laplace.
    #[arg(long, default_value = "ar-laplace")]
    pub source_model: String,
    #[arg(long, default_value_t = 8000.0)]
    pub sample_rate: f64,
    #[arg(long, default_value_t = 50)]
    pub test_mixtures: usize,
    #[arg(long, default_value_t = 2.0)]
    pub test_seconds: f64,
    /// Load trained blocks from this checkpoint instead of training.
    #[arg(long)]
    pub load: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CacheArgs {
    /// Cache directory (default: <out-dir>/cache).
    #[arg(long)]
    pub dir: Option<PathBuf>,
    #[command(subcommand)]
    pub action: CacheAction,
}

#[derive(Subcommand, Debug)]
pub enum CacheAction {
    List,
    /// Recompute every table digest; exits with status 3 on corruption.
    Verify,
    Purge,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<scss::Error>() {
            return if e.is_validation() { 2 } else { 3 };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
