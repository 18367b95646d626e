mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Identification of self-scheduled LPV models in linear fractional
/// representation.
#[derive(Debug, Parser)]
#[command(name = "lpvlfr", version, about)]
struct Cli {
    /// More log output (-v info, -vv debug); RUST_LOG takes precedence.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate benchmark data sets as CSV with metadata sidecars.
    Generate(GenerateArgs),
    /// Fit a model with multi-start Adam + L-BFGS.
    Train(TrainArgs),
    /// Simulate a model on a data set and report BFR and MSE.
    Eval(EvalArgs),
    /// Check well-posedness of a model over the unit scheduling box.
    Verify(VerifyArgs),
    /// Freeze a model at scheduling points and write the LTI matrices.
    ExportSs(ExportArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value = "nl-msd")]
    benchmark: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// train, val, test or all.
    #[arg(long, default_value = "all")]
    split: String,
    /// Output noise variance instead of SNR calibration.
    #[arg(long, conflicts_with = "snr_db")]
    noise_variance: Option<f64>,
    /// Target output SNR in dB.
    #[arg(long)]
    snr_db: Option<f64>,
    /// Output directory (default: $LPVLFR_OUT_DIR or ./runs).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Experiment file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with_all = ["train", "val"])]
    benchmark: Option<String>,
    /// Seed of the generated benchmark data.
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long, requires = "val")]
    train: Option<PathBuf>,
    #[arg(long, requires = "train")]
    val: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// affine or rational.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    n_x: Option<usize>,
    /// Repetition vector, e.g. 3 or 1,1.
    #[arg(long, value_delimiter = ',')]
    eta: Option<Vec<usize>>,
    /// Hidden layer sizes of the scheduling net; empty for the linear map.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    adam_epochs: Option<usize>,
    #[arg(long)]
    lbfgs_epochs: Option<usize>,
    #[arg(long)]
    reg_rho: Option<f64>,
    #[arg(long)]
    normalize_data: bool,
    /// Cap on concurrently running restarts.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    emit_plot_data: bool,
    /// Output directory (default: config, then $LPVLFR_OUT_DIR, then ./runs).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Re-estimate x0 on the first samples before simulating.
    #[arg(long)]
    fit_x0: bool,
    #[arg(long, default_value_t = 100)]
    x0_samples: usize,
    /// Per-sample CSV (default: <out dir>/<data stem>.eval.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// Grid points per scheduling dimension.
    #[arg(long, default_value_t = 21)]
    grid: usize,
    /// Additional uniform random scheduling points.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    /// Text file with one comma-separated scheduling point per line.
    #[arg(long)]
    points: PathBuf,
    /// JSON-lines output (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Error carrying the process exit code.
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;

pub fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        error: error.into(),
    }
}

pub fn runtime(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        error: error.into(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Verify(a) => commands::verify(a),
        Command::ExportSs(a) => commands::export_ss(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
