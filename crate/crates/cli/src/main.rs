//! `gadgetscan`: extract code gadgets, train a BLSTM detector, scan targets
//! and score predictions.

mod commands;
mod config;
mod corpus;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::ExtractArgs;
use config::{PipelineConfig, PipelineOptions};

#[derive(Debug, Parser)]
#[command(name = "gadgetscan", version, about = "Deep-learning vulnerability detection over code gadgets")]
struct Cli {
    /// TOML file setting any of the pipeline options.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    options: PipelineOptions,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract and label code gadgets from a corpus into a gadget database.
    Extract {
        /// Write gadgets that need manual label review to this file.
        #[arg(long)]
        export_review: Option<PathBuf>,
        /// Apply an edited review file before conflict removal.
        #[arg(long)]
        apply_review: Option<PathBuf>,
    },
    /// Train token embeddings and the BLSTM classifier on a gadget database.
    Train {
        /// Report k-fold cross-validation before the final fit.
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Scan target programs with a trained model.
    Detect {
        /// Target files or corpus directories (default: --corpus).
        targets: Vec<PathBuf>,
    },
    /// Score predictions against ground truth.
    Eval {
        /// Detection report or `id<TAB>class` lines.
        #[arg(long)]
        predictions: PathBuf,
        /// Gadget database or `id<TAB>label` lines.
        #[arg(long)]
        truth: PathBuf,
    },
    /// Train on a program-level split once per layer count and score the held-out side.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6")]
        layer_counts: Vec<usize>,
        /// Fraction of programs used for training.
        #[arg(long, default_value_t = 0.8)]
        train_ratio: f64,
    },
}

fn run(cli: Cli) -> Result<()> {
    let options = match &cli.config {
        Some(path) => cli.options.or(PipelineOptions::load(path)?),
        None => cli.options,
    };
    let cfg = PipelineConfig::resolve(options)?;
    match cli.command {
        Command::Extract { export_review, apply_review } => {
            commands::extract(&cfg, &ExtractArgs { export_review, apply_review })
        }
        Command::Train { folds } => commands::train_cmd(&cfg, folds),
        Command::Detect { targets } => commands::detect_cmd(&cfg, &targets),
        Command::Eval { predictions, truth } => commands::eval_cmd(&cfg, &predictions, &truth),
        Command::Sweep { layer_counts, train_ratio } => {
            if !(train_ratio > 0.0 && train_ratio < 1.0) {
                anyhow::bail!("--train-ratio must be in (0, 1)");
            }
            commands::sweep_cmd(&cfg, &layer_counts, train_ratio)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
