//! Frozen promptable-segmentation backends.
//!
//! Every backend implements [`SegmentationBackend`] and is registered by
//! name in a [`BackendRegistry`]; the pipeline picks one at runtime from
//! config. Backends are frozen by contract: serving a request must not
//! change their parameters, which [`SegmentationBackend::state_checksum`]
//! makes checkable.

mod constant;
mod oracle;
mod process;
mod recording;
mod registry;
mod two_pass;

use std::path::PathBuf;

use thiserror::Error;

pub use constant::ConstantBackend;
pub use oracle::{GtResolver, OracleBackend};
pub use process::{ProcessBackend, WirePoint, WireRequest, WireResponse};
pub use recording::RecordingBackend;
pub use registry::{BackendInit, BackendRegistry, BackendSettings};
pub use two_pass::two_pass_segment;

use crate::mask::SegmentationMask;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("prompt ({x}, {y}) is outside the {width}x{height} image")]
    PromptOutOfBounds { x: i64, y: i64, width: u32, height: u32 },
    #[error("request needs at least one point prompt when no mask prompt is given")]
    EmptyPrompt,
    #[error("malformed request: {0}")]
    MalformedRequest(String),
    #[error("backend returned a {got_w}x{got_h} mask for a {want_w}x{want_h} image")]
    MaskDims { got_w: u32, got_h: u32, want_w: u32, want_h: u32 },
    #[error("iterations must be 1 or 2, got {0}")]
    BadIterations(u32),
    #[error("unknown backend '{name}' (known: {known})")]
    Unknown { name: String, known: String },
    #[error("no ground truth available for image '{0}'")]
    MissingGroundTruth(String),
    #[error("backend process failed: {0}")]
    Process(String),
    #[error("mask error: {0}")]
    Mask(#[from] crate::mask::MaskError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("wire JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Point-prompt polarity: positive marks the object, negative the background.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

/// An integer-pixel labeled point prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointPrompt {
    pub x: u32,
    pub y: u32,
    pub polarity: Polarity,
}

impl PointPrompt {
    /// Rounds a real coordinate into the image, clamping the half-open
    /// bounds. This is the only place prompt coordinates are discretized.
    pub fn from_continuous(x: f64, y: f64, width: u32, height: u32, polarity: Polarity) -> Self {
        let clamp = |v: f64, hi: u32| -> u32 { (v.round().max(0.0) as u32).min(hi - 1) };
        Self {
            x: clamp(x, width),
            y: clamp(y, height),
            polarity,
        }
    }
}

/// The image a request refers to. Backends that run out of process need
/// `path`; in-process backends only use the id and dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRef {
    pub id: String,
    pub path: Option<PathBuf>,
    pub width: u32,
    pub height: u32,
}

/// One segmentation request: an image, labeled points, and optionally the
/// previous pass's mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationRequest {
    pub image: ImageRef,
    pub points: Vec<PointPrompt>,
    pub mask_prompt: Option<SegmentationMask>,
}

impl SegmentationRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.points.is_empty() && self.mask_prompt.is_none() {
            return Err(BackendError::EmptyPrompt);
        }
        for p in &self.points {
            if p.x >= self.image.width || p.y >= self.image.height {
                return Err(BackendError::PromptOutOfBounds {
                    x: p.x as i64,
                    y: p.y as i64,
                    width: self.image.width,
                    height: self.image.height,
                });
            }
        }
        if let Some(mask) = &self.mask_prompt {
            if mask.width() != self.image.width || mask.height() != self.image.height {
                return Err(BackendError::MaskDims {
                    got_w: mask.width(),
                    got_h: mask.height(),
                    want_w: self.image.width,
                    want_h: self.image.height,
                });
            }
        }
        Ok(())
    }
}

/// A frozen promptable segmenter.
pub trait SegmentationBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Produces one mask with the same dimensions as the request's image.
    /// Must not mutate backend parameters.
    fn segment(&self, request: &SegmentationRequest) -> Result<SegmentationMask, BackendError>;

    /// Whether concurrent `segment` calls are allowed on one instance.
    /// The pipeline serializes calls when this is false.
    fn supports_concurrent(&self) -> bool {
        false
    }

    /// Checksum over the backend's parameters/configuration; must be stable
    /// across any number of `segment` calls.
    fn state_checksum(&self) -> u64;
}

pub(crate) fn checksum_bytes(bytes: impl IntoIterator<Item = u8>) -> u64 {
    // FNV-1a, enough to detect parameter drift in tests.
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub(crate) fn checksum_mask(mask: &SegmentationMask) -> u64 {
    checksum_bytes(
        mask.values()
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .chain(mask.width().to_le_bytes())
            .chain(mask.height().to_le_bytes()),
    )
}
