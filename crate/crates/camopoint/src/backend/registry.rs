//! Name-keyed backend registry.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    BackendError, ConstantBackend, GtResolver, OracleBackend, ProcessBackend,
    SegmentationBackend,
};
use crate::mask::SegmentationMask;

/// Backend options taken from the run configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSettings {
    /// argv prefix of the external service (process backend only).
    pub command: Vec<String>,
    /// Scratch directory for wire files; defaults next to the run output.
    pub workdir: Option<PathBuf>,
    /// Fixed mask file (constant backend only); all-zero when absent.
    pub mask_path: Option<PathBuf>,
}

/// Everything a factory may need to build a backend.
pub struct BackendInit {
    pub settings: BackendSettings,
    /// Ground-truth lookup in the request coordinate frame (oracle only).
    pub gt_resolver: Option<Arc<dyn GtResolver>>,
}

pub type BackendFactory =
    Box<dyn Fn(&BackendInit) -> Result<Box<dyn SegmentationBackend>, BackendError> + Send + Sync>;

/// Runtime-selectable segmentation strategies, keyed by name.
///
/// Built-ins: `oracle` (ground-truth oracle), `constant` (fixed/all-zero
/// mask), `sam` (external process adapter).
pub struct BackendRegistry {
    factories: BTreeMap<String, BackendFactory>,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl BackendRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("constant", |init| {
            Ok(match &init.settings.mask_path {
                Some(path) => Box::new(ConstantBackend::fixed(SegmentationMask::load_png(path)?)),
                None => Box::new(ConstantBackend::zeros()),
            })
        });
        reg.register("oracle", |init| {
            let gts = init.gt_resolver.clone().ok_or_else(|| {
                BackendError::Unavailable(
                    "oracle backend needs ground truth; provide a dataset with masks".into(),
                )
            })?;
            Ok(Box::new(OracleBackend::new(gts)))
        });
        reg.register("sam", |init| {
            let workdir = init
                .settings
                .workdir
                .clone()
                .unwrap_or_else(std::env::temp_dir);
            Ok(Box::new(ProcessBackend::new(
                init.settings.command.clone(),
                workdir,
            )?))
        });
        reg
    }

    pub fn register(
        &mut self,
        name: &str,
        factory: impl Fn(&BackendInit) -> Result<Box<dyn SegmentationBackend>, BackendError>
            + Send
            + Sync
            + 'static,
    ) {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn create(
        &self,
        name: &str,
        init: &BackendInit,
    ) -> Result<Box<dyn SegmentationBackend>, BackendError> {
        match self.factories.get(name) {
            Some(f) => f(init),
            None => Err(BackendError::Unknown {
                name: name.to_string(),
                known: self.names().join(", "),
            }),
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.factories.keys().cloned().collect()
    }
}
