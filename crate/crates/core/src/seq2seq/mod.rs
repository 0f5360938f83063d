//! Attention-based viseme-to-character encoder/decoder, written without an
//! autodiff framework.

mod checkpoint;
mod decode;
mod model;
mod params;
mod train;
mod vocab;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, Model, FORMAT_VERSION};
pub use decode::{beam_decode, beam_search, default_max_len, greedy_decode, greedy_search, BoundDecoder, Hypothesis, StepModel};
pub use model::{Encoded, ForwardOutput, Pair};
pub use params::{GruWeights, ModelConfig, ModelParams, Scalar, Tensor};
pub use train::{train, train_with_callback, EpochRecord, Precision, TrainConfig, TrainOutcome};
pub use vocab::{TokenVocab, EOS, PAD, SOS};

#[derive(Debug, Error)]
pub enum Seq2SeqError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
