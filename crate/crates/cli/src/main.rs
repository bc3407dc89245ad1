mod commands;
mod config;
mod error;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "ijscc", version, about = "Overfitted joint source-channel image codec")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Overfit channel symbols and a decoder to one image and write the artifact.
    Encode(EncodeArgs),
    /// Simulate one channel realisation of an artifact and reconstruct the image.
    Decode(DecodeArgs),
    /// Run a grid of encodes and write result rows and plot data.
    Sweep(SweepArgs),
    /// Write channel input/output levels and upsampler output as grayscale images.
    DumpSymbols(DumpArgs),
    /// Print parameter, multiplication and rate counts for a configuration.
    Info(InfoArgs),
}

/// Overrides shared by `encode` and `sweep`; unset flags fall back to the
/// config file, then to built-in defaults.
#[derive(Args, Debug, Default, Clone)]
pub struct Overrides {
    /// key = value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Channel SNR in dB (`inf` for a noiseless channel).
    #[arg(long, allow_hyphen_values = true)]
    pub snr: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Hidden width of the synthesis head.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub kappa_lsm: Option<usize>,
    /// Upsampler repetition; ignored when a budget is set.
    #[arg(long)]
    pub kappa_redu: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
    /// Total bandwidth ratio; fills kappa_redu with whatever is left.
    #[arg(long)]
    pub budget: Option<f64>,
    /// Greedy search over (d, kappa_lsm) candidates (needs --budget).
    #[arg(long)]
    pub search: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Noise realisations behind the reported PSNR.
    #[arg(long)]
    pub eval_draws: Option<usize>,
    /// adam or sgd.
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Worker threads.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Write zeros for wall-clock columns so outputs are byte-reproducible.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    /// Source image (binary PPM or PGM).
    #[arg(short, long)]
    pub input: Option<PathBuf>,
    /// Artifact path.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Training log CSV.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[arg(short, long)]
    pub artifact: PathBuf,
    /// Reconstructed image (PPM or PGM).
    #[arg(short, long)]
    pub output: PathBuf,
    /// Original image; enables quality metrics.
    #[arg(short, long)]
    pub reference: Option<PathBuf>,
    /// Seed of the simulated channel.
    #[arg(long, default_value_t = 0)]
    pub channel_seed: u64,
    /// Realisation index under the channel seed.
    #[arg(long, default_value_t = 0)]
    pub realization: u64,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Args, Debug)]
pub struct DumpArgs {
    #[arg(short, long)]
    pub artifact: PathBuf,
    #[arg(long)]
    pub outdir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub channel_seed: u64,
    #[arg(long, default_value_t = 0)]
    pub realization: u64,
}

#[derive(Args, Debug)]
pub struct InfoArgs {
    #[arg(long, default_value_t = 12)]
    pub d: usize,
    #[arg(long, default_value_t = 7)]
    pub levels: usize,
    #[arg(long, default_value_t = 3)]
    pub channels: usize,
    #[arg(long, default_value_t = 25)]
    pub kappa_lsm: usize,
    #[arg(long, default_value_t = 1)]
    pub kappa_redu: usize,
    /// Source height for rate accounting.
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// Fill kappa_redu from this total bandwidth ratio (needs height and width).
    #[arg(long)]
    pub budget: Option<f64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Encode(a) => commands::encode(a),
        Command::Decode(a) => commands::decode(a),
        Command::Sweep(a) => sweep::run(a),
        Command::DumpSymbols(a) => commands::dump_symbols(a),
        Command::Info(a) => commands::info(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ijscc: {e}");
            e.exit_code()
        }
    }
}
