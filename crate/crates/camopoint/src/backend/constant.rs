//! Backend that ignores prompts and returns a fixed mask.

use super::{checksum_mask, BackendError, SegmentationBackend, SegmentationRequest};
use crate::mask::SegmentationMask;

/// Returns the configured mask for every request, or an all-zero mask of
/// the request's dimensions when none is configured. Useful as the
/// "unprompted backend" baseline and as a mock in tests.
pub struct ConstantBackend {
    mask: Option<SegmentationMask>,
}

impl ConstantBackend {
    /// All-zero responses (the unprompted baseline).
    pub fn zeros() -> Self {
        Self { mask: None }
    }

    pub fn fixed(mask: SegmentationMask) -> Self {
        Self { mask: Some(mask) }
    }
}

impl SegmentationBackend for ConstantBackend {
    fn name(&self) -> &str {
        "constant"
    }

    fn segment(&self, request: &SegmentationRequest) -> Result<SegmentationMask, BackendError> {
        request.validate()?;
        match &self.mask {
            Some(mask) => {
                if mask.width() != request.image.width || mask.height() != request.image.height {
                    return Err(BackendError::MaskDims {
                        got_w: mask.width(),
                        got_h: mask.height(),
                        want_w: request.image.width,
                        want_h: request.image.height,
                    });
                }
                Ok(mask.clone())
            }
            None => Ok(SegmentationMask::zeros(
                request.image.width,
                request.image.height,
            )),
        }
    }

    fn supports_concurrent(&self) -> bool {
        true
    }

    fn state_checksum(&self) -> u64 {
        match &self.mask {
            Some(mask) => checksum_mask(mask),
            None => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ImageRef, PointPrompt, Polarity};

    fn request(w: u32, h: u32) -> SegmentationRequest {
        SegmentationRequest {
            image: ImageRef {
                id: "img".into(),
                path: None,
                width: w,
                height: h,
            },
            points: vec![PointPrompt {
                x: 1,
                y: 1,
                polarity: Polarity::Positive,
            }],
            mask_prompt: None,
        }
    }

    #[test]
    fn returns_the_configured_mask_for_any_request() {
        let m = SegmentationMask::from_fn(4, 4, |x, _| if x == 0 { 1.0 } else { 0.0 });
        let b = ConstantBackend::fixed(m.clone());
        let got = b.segment(&request(4, 4)).unwrap();
        assert_eq!(got, m);
        let checksum = b.state_checksum();
        b.segment(&request(4, 4)).unwrap();
        assert_eq!(b.state_checksum(), checksum);
    }

    #[test]
    fn zeros_match_request_dims() {
        let b = ConstantBackend::zeros();
        let got = b.segment(&request(6, 3)).unwrap();
        assert_eq!((got.width(), got.height()), (6, 3));
        assert!(got.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_empty_prompts_and_oob_points() {
        let b = ConstantBackend::zeros();
        let mut req = request(4, 4);
        req.points.clear();
        assert!(matches!(b.segment(&req), Err(BackendError::EmptyPrompt)));
        let mut req = request(4, 4);
        req.points[0].x = 9;
        assert!(matches!(
            b.segment(&req),
            Err(BackendError::PromptOutOfBounds { .. })
        ));
    }
}
