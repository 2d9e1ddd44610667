//! `latentaug` command line: train the augmenter, apply transformation
//! chains directly or through the latent space, and write deterministic
//! evaluation reports.
//!
//! Exit codes: 1 for configuration problems, 2 for data or I/O
//! problems, 3 for numerical failures (divergence, failed checks).

mod commands;
mod config;
mod reports;

use clap::{Parser, Subcommand, ValueEnum};
use latentaug::Error;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "latentaug", version, about = "Latent-space time series augmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Transform the raw series values.
    Direct,
    /// Transform the encoded latent sequence, then decode.
    Latent,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic seasonal panel as a CSV corpus.
    Synth {
        /// Output CSV path (a .groups sidecar is written next to it).
        #[arg(long)]
        out: PathBuf,
        /// Number of series.
        #[arg(long, default_value_t = 64)]
        series: usize,
        /// Length of each series.
        #[arg(long, default_value_t = 96)]
        length: usize,
        /// Observation noise level.
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Train the augmenter on a panel and save a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint output path (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Optional per-epoch loss table (TSV).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Apply a transformation chain and write the augmented panel.
    Augment {
        #[arg(long)]
        config: PathBuf,
        /// Trained checkpoint.
        #[arg(long)]
        model: PathBuf,
        /// Which chain to apply: the raw values or the latent sequence.
        #[arg(long, value_enum)]
        mode: Mode,
        /// Output CSV path (original scale).
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare direct and latent augmentation: distances, error
    /// ratios, residual statistics, and density curves.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Directory the report tables are written into.
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Search the latent transformation strength that reproduces the
    /// direct chain's distributional distance.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Where to write the updated config.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train-on-synthetic, test-on-real forecasting comparison.
    Tstr {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Output table (TSV).
        #[arg(long)]
        out: PathBuf,
    },
    /// Check training gradients against finite differences on a small
    /// randomly initialized model.
    Gradcheck {
        #[arg(long, default_value_t = 6)]
        window: usize,
        #[arg(long, default_value_t = 6)]
        hidden: usize,
        #[arg(long, default_value_t = 2)]
        latent: usize,
        #[arg(long, default_value_t = 2)]
        heads: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Config(_) => 1,
        Error::Data(_) | Error::Io { .. } => 2,
        Error::Numerical(_) => 3,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { out, series, length, noise, seed } => {
            commands::synth(&out, series, length, noise, seed)
        }
        Command::Train { config, out, log } => {
            commands::train(&config, &out, log.as_deref())
        }
        Command::Augment { config, model, mode, out } => {
            commands::augment(&config, &model, mode, &out)
        }
        Command::Evaluate { config, model, outdir } => {
            commands::evaluate(&config, &model, &outdir)
        }
        Command::Calibrate { config, model, out } => {
            commands::calibrate(&config, &model, &out)
        }
        Command::Tstr { config, model, out } => commands::tstr(&config, &model, &out),
        Command::Gradcheck { window, hidden, latent, heads, seed, step, tolerance } => {
            commands::gradcheck(window, hidden, latent, heads, seed, step, tolerance)
        }
    };
    if let Err(error) = result {
        eprintln!("error: {error}");
        std::process::exit(exit_code(&error));
    }
}
