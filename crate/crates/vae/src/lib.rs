//! Convolutional VAE with multi-head EMA blocks for fixed-length trajectory
//! windows: model definition, training, prior sampling and weight files.

mod config;
mod generate;
mod model;
mod train;
mod weights;

pub use config::{Ablation, ModelConfig};
pub use generate::{generate, generate_from, latent_sample, reconstruct};
pub use model::{reparameterize, total_loss, ConfluxVae, LatentCode, LossTerms};
pub use train::{to_batch, train, train_with, EpochLoss, Progress, TrainOutcome};
pub use weights::{load_weights, save_weights, ModelWeights, FORMAT_VERSION, MAGIC};

use forge_core::TrajectoryError;
use forge_nn::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VaeError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("dataset sequences have length {found}, model expects {expected}")]
    SequenceLength { expected: usize, found: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("weights file format version {found}, expected {expected}")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("corrupt weights file: {0}")]
    CorruptFile(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
