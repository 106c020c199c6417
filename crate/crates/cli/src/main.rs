//! `age-ensemble` command-line driver.
//!
//! Exit codes: 0 success, 2 usage error, 3 I/O error, 4 schema or
//! validation error.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use age_ensemble::dataset::Split;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "age-ensemble", version)]
#[command(about = "Apparent-age estimation with a shifted-group classifier ensemble", long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a label CSV (`id,mean,stddev`) and write a dataset file
    Ingest {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_parser = parse_split)]
        split: Split,
        /// Output dataset file [default: <labels>.dataset.json]
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Age histogram and annotator-stddev statistics as CSV
    Stats {
        /// Dataset file, or a label CSV
        #[arg(long)]
        dataset: PathBuf,
        /// Output CSV [default: stdout]
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Plan distribution-flattening augmentation and render the replicas
    Augment {
        #[arg(long)]
        dataset: PathBuf,
        /// Directory holding `<id>.png` or `<id>.ppm`
        #[arg(long)]
        images: PathBuf,
        /// Overridden by AGE_ENSEMBLE_SEED when set
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Maximum growth factor of any age bin
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
        cap: u64,
        #[arg(long)]
        out: PathBuf,
    },

    /// Align faces to the 256x256 five-point template
    Align {
        #[arg(long)]
        images: PathBuf,
        /// CSV `image_id,lx,ly,rx,ry,nx,ny,lmx,lmy,rmx,rmy`
        #[arg(long)]
        landmarks: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },

    /// Train the three shifted-group classifiers
    Train {
        /// CSV `id,f0,f1,...`
        #[arg(long)]
        features: PathBuf,
        /// Dataset file, or a label CSV
        #[arg(long)]
        dataset: PathBuf,
        /// TOML training config; defaults apply to missing keys
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for the three checkpoints
        #[arg(long)]
        out: PathBuf,
    },

    /// Predict ages from features with a trained ensemble
    Predict {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Number of most probable groups in the expected value (34 = all, 1 = arg-max)
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..=34))]
        k: u64,
        #[arg(long)]
        out: PathBuf,
    },

    /// Epsilon-error of predictions against labels
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        /// Label CSV or dataset file
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },

    /// 34x34 group confusion matrix under one grouping shift
    Confusion {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u32).range(0..=2))]
        shift: u32,
        #[arg(long)]
        out: PathBuf,
    },

    /// Write a synthetic label CSV and feature CSV
    Synth {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        dim: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Overridden by AGE_ENSEMBLE_SEED when set
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: age_ensemble::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest { labels, split, out } => commands::ingest(&labels, split, out),
        Command::Stats { dataset, out } => commands::stats(&dataset, out.as_deref()),
        Command::Augment {
            dataset,
            images,
            seed,
            cap,
            out,
        } => commands::augment(&dataset, &images, seed, cap as usize, &out),
        Command::Align {
            images,
            landmarks,
            out,
        } => commands::align(&images, &landmarks, &out),
        Command::Train {
            features,
            dataset,
            config,
            out,
        } => commands::train(&features, &dataset, config.as_deref(), &out),
        Command::Predict {
            models,
            features,
            k,
            out,
        } => commands::predict(&models, &features, k as usize, &out),
        Command::Evaluate {
            predictions,
            labels,
            out,
        } => commands::evaluate(&predictions, &labels, &out),
        Command::Confusion {
            predictions,
            labels,
            shift,
            out,
        } => commands::confusion(&predictions, &labels, shift, &out),
        Command::Synth {
            n,
            dim,
            noise,
            seed,
            out,
        } => commands::synth(n, dim, noise, seed, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
