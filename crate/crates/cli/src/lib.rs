//! `forge`: the scenario pipeline as separate, rerunnable commands that
//! communicate only through files.

mod commands;
mod config;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use forge_core::synth::SynthKind;
use thiserror::Error;

pub use commands::{load_dataset, load_trajectories, Summary};
pub use config::{GenerateSection, PipelineConfig, Seeds, SynthSection};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config, flags or input artifacts. Exit code 2.
    #[error("{0}")]
    Validation(String),
    /// Anything that fails after inputs were accepted. Exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub(crate) fn context(self, path: &Path) -> Self {
        match self {
            CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
            CliError::Runtime(m) => CliError::Runtime(format!("{}: {m}", path.display())),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "forge", version, about = "Generate vessel trajectories and build encounter scenario libraries")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Pipeline config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed the command would take from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; a directory for `pair`. Optional for `evaluate`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print the command summary as JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic traffic-flow corpus as CSV.
    Synth {
        /// Flow geometry; defaults to the config's `synth.kind`.
        #[arg(long)]
        kind: Option<SynthKind>,
        /// 1 or 2.
        #[arg(long, default_value_t = 1)]
        route: u8,
        /// Number of raw tracks; defaults to `synth.count`.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Clean a raw CSV into a fixed-length dataset for one route.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        /// Route name from the config; defaults to the first route.
        #[arg(long)]
        route: Option<String>,
    },
    /// Train a model on a dataset and write its weights.
    Train {
        #[arg(long)]
        input: PathBuf,
        /// Overrides `model.epochs`.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Sample trajectories from trained weights.
    Generate {
        #[arg(long)]
        input: PathBuf,
        /// Defaults to `generate.count`.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Savitzky-Golay smoothing of every track in a CSV.
    Smooth {
        #[arg(long)]
        input: PathBuf,
    },
    /// Compare generated tracks against a reference dataset.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        /// Preprocessed dataset JSON; its bounds normalize both sets.
        #[arg(long)]
        reference: PathBuf,
    },
    /// Pair two trajectory pools into a scenario library directory.
    Pair {
        /// Two inputs, flow 1 then flow 2 (CSV or dataset JSON).
        #[arg(long, num_args = 2, required = true)]
        input: Vec<PathBuf>,
    },
}

pub fn run(cli: &Cli) -> Result<Summary, CliError> {
    let path = cli.config.as_deref().ok_or_else(|| CliError::Validation("--config is required".into()))?;
    let cfg = PipelineConfig::load(path)?;
    commands::dispatch(cli, &cfg)
}
