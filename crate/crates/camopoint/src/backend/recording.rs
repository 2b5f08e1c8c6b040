//! Request-recording wrapper for behavioral tests.

use std::sync::Mutex;

use super::{BackendError, SegmentationBackend, SegmentationRequest};
use crate::mask::SegmentationMask;

/// Wraps another backend and logs every request it serves. The log is
/// observational state, not parameters, so the checksum delegates to the
/// wrapped backend.
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<Vec<SegmentationRequest>>,
}

impl<B: SegmentationBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<SegmentationRequest> {
        self.log.lock().expect("recording log poisoned").clone()
    }

    pub fn call_count(&self) -> usize {
        self.log.lock().expect("recording log poisoned").len()
    }
}

impl<B: SegmentationBackend> SegmentationBackend for RecordingBackend<B> {
    fn name(&self) -> &str {
        "recording"
    }

    fn segment(&self, request: &SegmentationRequest) -> Result<SegmentationMask, BackendError> {
        self.log
            .lock()
            .expect("recording log poisoned")
            .push(request.clone());
        self.inner.segment(request)
    }

    fn supports_concurrent(&self) -> bool {
        // Log order must match call order.
        false
    }

    fn state_checksum(&self) -> u64 {
        self.inner.state_checksum()
    }
}
