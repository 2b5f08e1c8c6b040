//! Ground-truth oracle backend for tests and fixture runs.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{
    checksum_bytes, BackendError, Polarity, SegmentationBackend, SegmentationRequest,
};
use crate::mask::SegmentationMask;

/// Looks up the ground-truth mask for an image id, in the same coordinate
/// frame the requests use.
pub trait GtResolver: Send + Sync {
    fn resolve(&self, image_id: &str) -> Result<SegmentationMask, BackendError>;
}

impl GtResolver for BTreeMap<String, SegmentationMask> {
    fn resolve(&self, image_id: &str) -> Result<SegmentationMask, BackendError> {
        self.get(image_id)
            .cloned()
            .ok_or_else(|| BackendError::MissingGroundTruth(image_id.to_string()))
    }
}

impl<F> GtResolver for F
where
    F: Fn(&str) -> Result<SegmentationMask, BackendError> + Send + Sync,
{
    fn resolve(&self, image_id: &str) -> Result<SegmentationMask, BackendError> {
        self(image_id)
    }
}

/// Returns the ground truth when at least one positive prompt sits on a
/// foreground pixel and no negative prompt does; any negative prompt on
/// foreground (contradictory guidance), or no positive hit, yields the
/// all-zero mask.
pub struct OracleBackend {
    gts: Arc<dyn GtResolver>,
}

impl OracleBackend {
    pub fn new(gts: Arc<dyn GtResolver>) -> Self {
        Self { gts }
    }
}

impl SegmentationBackend for OracleBackend {
    fn name(&self) -> &str {
        "oracle"
    }

    fn segment(&self, request: &SegmentationRequest) -> Result<SegmentationMask, BackendError> {
        request.validate()?;
        let gt = self.gts.resolve(&request.image.id)?;
        if gt.width() != request.image.width || gt.height() != request.image.height {
            return Err(BackendError::MaskDims {
                got_w: gt.width(),
                got_h: gt.height(),
                want_w: request.image.width,
                want_h: request.image.height,
            });
        }
        let mut positive_hit = false;
        let mut negative_hit = false;
        for p in &request.points {
            let on_fg = gt.is_foreground(p.x, p.y);
            match p.polarity {
                Polarity::Positive if on_fg => positive_hit = true,
                Polarity::Negative if on_fg => negative_hit = true,
                _ => {}
            }
        }
        if positive_hit && !negative_hit {
            Ok(gt)
        } else {
            Ok(SegmentationMask::zeros(
                request.image.width,
                request.image.height,
            ))
        }
    }

    fn supports_concurrent(&self) -> bool {
        true
    }

    fn state_checksum(&self) -> u64 {
        // The resolver is the oracle's only state and it is immutable.
        checksum_bytes(self.name().bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ImageRef, PointPrompt};

    fn setup() -> (OracleBackend, SegmentationMask) {
        // Left half foreground.
        let gt = SegmentationMask::from_fn(8, 8, |x, _| if x < 4 { 1.0 } else { 0.0 });
        let mut map = BTreeMap::new();
        map.insert("img".to_string(), gt.clone());
        (OracleBackend::new(Arc::new(map)), gt)
    }

    fn request(points: Vec<(u32, u32, Polarity)>) -> SegmentationRequest {
        SegmentationRequest {
            image: ImageRef {
                id: "img".into(),
                path: None,
                width: 8,
                height: 8,
            },
            points: points
                .into_iter()
                .map(|(x, y, polarity)| PointPrompt { x, y, polarity })
                .collect(),
            mask_prompt: None,
        }
    }

    #[test]
    fn positive_on_foreground_returns_ground_truth() {
        let (oracle, gt) = setup();
        let req = request(vec![
            (1, 1, Polarity::Positive),
            (6, 6, Polarity::Negative),
        ]);
        assert_eq!(oracle.segment(&req).unwrap(), gt);
    }

    #[test]
    fn all_positives_in_background_returns_zeros() {
        let (oracle, _) = setup();
        let req = request(vec![(6, 2, Polarity::Positive)]);
        let got = oracle.segment(&req).unwrap();
        assert!(got.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn negative_on_foreground_flips_to_zeros() {
        let (oracle, _) = setup();
        let req = request(vec![
            (1, 1, Polarity::Positive),
            (2, 2, Polarity::Negative),
        ]);
        let got = oracle.segment(&req).unwrap();
        assert!(got.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unknown_image_is_an_error() {
        let (oracle, _) = setup();
        let mut req = request(vec![(1, 1, Polarity::Positive)]);
        req.image.id = "nope".into();
        assert!(matches!(
            oracle.segment(&req),
            Err(BackendError::MissingGroundTruth(_))
        ));
    }
}
