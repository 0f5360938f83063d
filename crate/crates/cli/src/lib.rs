//! Experiment driver for the lipdec toolkit: config parsing, the noisy
//! front-end stand-in and the prepare/analyze/train/evaluate stages.

pub mod config;
pub mod noise;
pub mod pipeline;

pub use config::{Asset, ConfigError, DecodeMode, ExperimentConfig};
pub use noise::{inject_viseme_noise, NoiseError};
pub use pipeline::{decode_line, run_experiment, RunError, RunSummary, Stage, StageError};
