//! EEG gaze-position regression. A temporal convolutional network feeds a
//! convolutional bridge whose output columns become the tokens of a
//! ViT-style encoder. The crate also covers datasets, training, latency
//! benchmarks and the ablation grid.

mod codec;

pub mod ablation;
pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod flops;
pub mod gradcheck;
pub mod model;
pub mod reference;
pub mod training;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use config::{AblationFlags, ModelConfig};
pub use data::{DataError, Dataset, Sample};
pub use error::{Error, Result};
pub use model::Model;
pub use training::{RunReport, SeedReport, TrainConfig};

pub use eegvit_tensor as tensor;
