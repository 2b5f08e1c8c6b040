//! Camouflaged-object segmentation by prompting a frozen promptable backend.
//!
//! The toolkit turns an unannotated image into a handful of labeled point
//! prompts and drives a frozen segmentation backend with them:
//!
//! 1. [`grid`] lays an M×M grid of candidate points over the image and pools
//!    ground-truth masks into per-cell supervision targets.
//! 2. [`ppt`] scores every candidate with a small multi-scale CNN (the
//!    promotion-point targeting network) trained against those targets.
//! 3. [`kps`] stratifies the scores into confidence levels and greedily picks
//!    positive points spread over the object, each paired with its two
//!    nearest background points.
//! 4. [`backend`] sends the points (and, on the second pass, the first-pass
//!    mask) to a pluggable segmentation backend. Backends are registered by
//!    name and selected at runtime; the backend is never trained or mutated.
//! 5. [`metrics`] scores predictions with the six standard structure/error
//!    measures used by the camouflaged-object benchmarks.
//!
//! [`pipeline`] wires the stages together over a [`dataset`] index, and
//! [`fixture`] generates a small synthetic dataset so the whole chain runs
//! without external assets.

pub mod backend;
pub mod dataset;
pub mod fixture;
pub mod grid;
pub mod kps;
pub mod mask;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod ppt;
pub mod viz;

pub use backend::{
    BackendError, BackendRegistry, PointPrompt, Polarity, SegmentationBackend,
    SegmentationRequest,
};
pub use grid::{CandidateGrid, CandidatePoint, GridError, TargetGrid};
pub use kps::{LevelPartition, PromptSelection, PromptTriple, Thresholds};
pub use mask::SegmentationMask;
pub use metrics::MetricsReport;
pub use pipeline::RunConfig;
pub use ppt::{PptNet, ScoreGrid, TrainConfig};
