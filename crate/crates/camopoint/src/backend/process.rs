//! Out-of-process backend adapter.
//!
//! Heavy promptable models stay behind a process boundary: the adapter
//! writes a JSON request, invokes the configured command as
//! `<cmd> <request.json> <response.json>`, and reads the response. The wire
//! schema is
//!
//! ```json
//! {"image_path": "...", "points": [{"x": 10, "y": 20, "label": 1}], "mask_path": "..."}
//! ```
//!
//! with `label` 1 for positive and 0 for negative points and `mask_path`
//! present only when a mask prompt is attached. The response is
//! `{"mask_path": "...", "score": 0.9}`.

use std::path::PathBuf;
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{
    checksum_bytes, BackendError, Polarity, SegmentationBackend, SegmentationRequest,
};
use crate::mask::SegmentationMask;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WirePoint {
    pub x: i64,
    pub y: i64,
    /// 1 = positive, 0 = negative.
    pub label: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireRequest {
    pub image_path: String,
    pub points: Vec<WirePoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WireResponse {
    pub mask_path: String,
    pub score: f64,
}

/// Drives an external segmentation service through the JSON wire schema.
pub struct ProcessBackend {
    command: Vec<String>,
    workdir: PathBuf,
    counter: AtomicU64,
}

impl ProcessBackend {
    /// `command` is the argv prefix of the service executable; `workdir`
    /// receives the per-request JSON and mask files.
    pub fn new(command: Vec<String>, workdir: PathBuf) -> Result<Self, BackendError> {
        if command.is_empty() {
            return Err(BackendError::Unavailable(
                "no backend command configured".into(),
            ));
        }
        std::fs::create_dir_all(&workdir)?;
        Ok(Self {
            command,
            workdir,
            counter: AtomicU64::new(0),
        })
    }

    pub fn to_wire(request: &SegmentationRequest, mask_path: Option<&str>) -> Result<WireRequest, BackendError> {
        let image_path = request
            .image
            .path
            .as_ref()
            .ok_or_else(|| {
                BackendError::MalformedRequest("process backend needs an image path".into())
            })?
            .display()
            .to_string();
        Ok(WireRequest {
            image_path,
            points: request
                .points
                .iter()
                .map(|p| WirePoint {
                    x: p.x as i64,
                    y: p.y as i64,
                    label: match p.polarity {
                        Polarity::Positive => 1,
                        Polarity::Negative => 0,
                    },
                })
                .collect(),
            mask_path: mask_path.map(str::to_string),
        })
    }
}

impl SegmentationBackend for ProcessBackend {
    fn name(&self) -> &str {
        "sam"
    }

    fn segment(&self, request: &SegmentationRequest) -> Result<SegmentationMask, BackendError> {
        request.validate()?;
        let seq = self.counter.fetch_add(1, Ordering::SeqCst);
        let request_path = self.workdir.join(format!("request-{seq}.json"));
        let response_path = self.workdir.join(format!("response-{seq}.json"));

        let mask_path = match &request.mask_prompt {
            Some(mask) => {
                let p = self.workdir.join(format!("prompt-mask-{seq}.png"));
                mask.save_png(&p)?;
                Some(p.display().to_string())
            }
            None => None,
        };
        let wire = Self::to_wire(request, mask_path.as_deref())?;
        std::fs::write(&request_path, serde_json::to_vec_pretty(&wire)?)?;

        let output = Command::new(&self.command[0])
            .args(&self.command[1..])
            .arg(&request_path)
            .arg(&response_path)
            .output()
            .map_err(|e| {
                BackendError::Unavailable(format!(
                    "failed to launch '{}': {e}",
                    self.command[0]
                ))
            })?;
        if !output.status.success() {
            return Err(BackendError::Process(format!(
                "'{}' exited with {}: {}",
                self.command[0],
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }

        let response: WireResponse = serde_json::from_slice(&std::fs::read(&response_path)?)?;
        let mask = SegmentationMask::load_png(&PathBuf::from(&response.mask_path))?;
        if mask.width() != request.image.width || mask.height() != request.image.height {
            return Err(BackendError::MaskDims {
                got_w: mask.width(),
                got_h: mask.height(),
                want_w: request.image.width,
                want_h: request.image.height,
            });
        }
        Ok(mask)
    }

    fn state_checksum(&self) -> u64 {
        // The adapter's own state is its command line; the remote weights
        // live behind the process boundary and are frozen by contract.
        checksum_bytes(self.command.join("\u{1f}").into_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ImageRef, PointPrompt};

    #[test]
    fn wire_request_has_the_documented_shape() {
        let request = SegmentationRequest {
            image: ImageRef {
                id: "a".into(),
                path: Some(PathBuf::from("/tmp/a.png")),
                width: 32,
                height: 32,
            },
            points: vec![
                PointPrompt {
                    x: 10,
                    y: 20,
                    polarity: Polarity::Positive,
                },
                PointPrompt {
                    x: 1,
                    y: 2,
                    polarity: Polarity::Negative,
                },
            ],
            mask_prompt: None,
        };
        let wire = ProcessBackend::to_wire(&request, None).unwrap();
        let json = serde_json::to_value(&wire).unwrap();
        assert_eq!(
            json,
            serde_json::json!({
                "image_path": "/tmp/a.png",
                "points": [
                    {"x": 10, "y": 20, "label": 1},
                    {"x": 1, "y": 2, "label": 0},
                ],
            })
        );
        let wire = ProcessBackend::to_wire(&request, Some("/tmp/m.png")).unwrap();
        let json = serde_json::to_value(&wire).unwrap();
        assert_eq!(json["mask_path"], "/tmp/m.png");
    }

    #[test]
    fn image_path_is_required() {
        let request = SegmentationRequest {
            image: ImageRef {
                id: "a".into(),
                path: None,
                width: 4,
                height: 4,
            },
            points: vec![],
            mask_prompt: None,
        };
        assert!(matches!(
            ProcessBackend::to_wire(&request, None),
            Err(BackendError::MalformedRequest(_))
        ));
    }
}
