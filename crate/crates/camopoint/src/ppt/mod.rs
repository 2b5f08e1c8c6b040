//! Promotion-point targeting: predicts the probability that a camouflaged
//! object is present at each grid candidate.

pub mod backbone;
pub mod checkpoint;
mod net;
mod rf;
mod train;

use thiserror::Error;

pub use backbone::{Backbone, BackboneRegistry, StageFeatures, ToyBackbone};
pub use net::{
    mse_grad, mse_loss, ForwardCache, LocalFeatureSet, MultiScaleFeatures, PptConfig, PptNet,
    ScoreGrid,
};
pub use rf::RfBlock;
pub use train::{train, TrainConfig, TrainReport, TrainingSet};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("expected a 3xHxW image tensor, got shape {shape:?}")]
    BadImageShape { shape: Vec<usize> },
    #[error("net is configured for an {net_m}x{net_m} grid, request uses {grid_m}x{grid_m}")]
    GridMismatch { net_m: usize, grid_m: usize },
    #[error("score/target length mismatch: {pred} predictions vs {target} targets")]
    LengthMismatch { pred: usize, target: usize },
    #[error("unknown backbone '{name}' (known: {known})")]
    UnknownBackbone { name: String, known: String },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    BadTrainConfig(String),
    #[error("non-finite loss {value} at epoch {epoch}; aborting")]
    NonFiniteLoss { epoch: usize, value: f64 },
    #[error("failed to pool training targets: {0}")]
    Target(crate::grid::GridError),
    #[error("training sample {index} failed to load: {message}")]
    Sample { index: usize, message: String },
    #[error("checkpoint I/O error: {0}")]
    CheckpointIo(std::io::Error),
    #[error("checkpoint manifest error: {0}")]
    CheckpointJson(serde_json::Error),
    #[error("bad checkpoint: {0}")]
    CheckpointFormat(String),
}
