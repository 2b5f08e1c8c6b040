//! The point-then-mask promotion loop.

use super::{
    BackendError, ImageRef, PointPrompt, Polarity, SegmentationBackend, SegmentationRequest,
};
use crate::kps::PromptSelection;
use crate::mask::SegmentationMask;

/// Converts a prompt selection into integer point prompts for an image.
pub fn point_prompts(selection: &PromptSelection, image: &ImageRef) -> Vec<PointPrompt> {
    let mut points = Vec::new();
    for triple in &selection.triples {
        points.push(PointPrompt::from_continuous(
            triple.pp.x,
            triple.pp.y,
            image.width,
            image.height,
            Polarity::Positive,
        ));
        for np in &triple.nps {
            points.push(PointPrompt::from_continuous(
                np.x,
                np.y,
                image.width,
                image.height,
                Polarity::Negative,
            ));
        }
    }
    points
}

/// Runs the backend once with point prompts, and (when `iterations` is 2)
/// once more with the same points plus the first pass's mask as the mask
/// prompt. Returns the last mask; the backend stays frozen throughout.
pub fn two_pass_segment(
    image: &ImageRef,
    selection: &PromptSelection,
    backend: &dyn SegmentationBackend,
    iterations: u32,
) -> Result<SegmentationMask, BackendError> {
    if iterations != 1 && iterations != 2 {
        return Err(BackendError::BadIterations(iterations));
    }
    let points = point_prompts(selection, image);
    let first = backend.segment(&SegmentationRequest {
        image: image.clone(),
        points: points.clone(),
        mask_prompt: None,
    })?;
    if iterations == 1 {
        return Ok(first);
    }
    backend.segment(&SegmentationRequest {
        image: image.clone(),
        points,
        mask_prompt: Some(first),
    })
}
