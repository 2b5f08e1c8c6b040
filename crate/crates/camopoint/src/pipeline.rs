//! End-to-end orchestration: ingest, score, select, segment, evaluate.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    BackendError, BackendInit, BackendRegistry, BackendSettings, GtResolver, ImageRef,
    SegmentationBackend,
};
use crate::dataset::{self, DatasetError, DatasetIndex, DatasetLayout};
use crate::grid::{generate_candidates, GridError};
use crate::kps::{self, KpsError, Thresholds};
use crate::mask::SegmentationMask;
use crate::metrics::{self, MetricConfig, MetricError, MetricsReport};
use crate::nn::Tensor;
use crate::ppt::{self, NetError, PptConfig, PptNet, TrainConfig, TrainReport, TrainingSet};
use crate::viz::VizError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Kps(#[from] KpsError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Viz(#[from] VizError),
    #[error("mask error: {0}")]
    Mask(#[from] crate::mask::MaskError),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("no image produced a metrics report (all {0} failed)")]
    AllFailed(usize),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Dataset location within a run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub name: String,
    pub root: PathBuf,
    #[serde(flatten)]
    pub layout: DatasetLayout,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            name: "synthetic".to_string(),
            root: PathBuf::from("fixtures/synthetic"),
            layout: DatasetLayout::default(),
        }
    }
}

/// One structured configuration for every pipeline verb. All fields have
/// defaults matching the reported configuration: a 16×16 grid, 5 positive
/// points (10 paired negatives), two passes, 512×512 working resolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub m: usize,
    pub k: usize,
    pub iterations: u32,
    pub resize: u32,
    pub seed: u64,
    pub backend: String,
    pub out: PathBuf,
    /// Evaluate at the original image resolution (predictions are
    /// nearest-upsampled) instead of the working resolution.
    pub eval_at_original: bool,
    /// Worker threads for image-level parallelism; used only when the
    /// backend supports concurrent requests.
    pub workers: usize,
    pub thresholds: Thresholds,
    pub dataset: DatasetConfig,
    pub net: NetSection,
    pub train: TrainConfig,
    pub backend_settings: BackendSettings,
    pub metrics: MetricConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NetSection {
    pub c_b: usize,
    pub hidden: usize,
    pub backbone: String,
}

impl Default for NetSection {
    fn default() -> Self {
        let d = PptConfig::default();
        Self {
            c_b: d.c_b,
            hidden: d.hidden,
            backbone: d.backbone,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            m: 16,
            k: 5,
            iterations: 2,
            resize: 512,
            seed: 0,
            backend: "oracle".to_string(),
            out: PathBuf::from("runs/out"),
            eval_at_original: false,
            workers: 4,
            thresholds: Thresholds::default(),
            dataset: DatasetConfig::default(),
            net: NetSection::default(),
            train: TrainConfig::default(),
            backend_settings: BackendSettings::default(),
            metrics: MetricConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn ppt_config(&self) -> PptConfig {
        PptConfig {
            m: self.m,
            c_b: self.net.c_b,
            hidden: self.net.hidden,
            backbone: self.net.backbone.clone(),
            seed: self.seed,
        }
    }

    pub fn load_toml(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|e| PipelineError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()),
        })
    }
}

/// Ground-truth lookup backed by a dataset index, serving masks in the
/// working coordinate frame.
pub struct IndexGtResolver {
    paths: BTreeMap<String, PathBuf>,
    resize: u32,
}

impl IndexGtResolver {
    pub fn new(index: &DatasetIndex, resize: u32) -> Self {
        Self {
            paths: index
                .entries
                .iter()
                .map(|e| (e.id.clone(), e.gt_path.clone()))
                .collect(),
            resize,
        }
    }
}

impl GtResolver for IndexGtResolver {
    fn resolve(&self, image_id: &str) -> Result<SegmentationMask, BackendError> {
        let path = self
            .paths
            .get(image_id)
            .ok_or_else(|| BackendError::MissingGroundTruth(image_id.to_string()))?;
        dataset::load_gt(path, self.resize)
            .map_err(|e| BackendError::Unavailable(e.to_string()))
    }
}

/// Builds the configured backend, wiring the oracle's ground-truth resolver
/// and the process adapter's working directory from the run layout.
pub fn make_backend(
    registry: &BackendRegistry,
    cfg: &RunConfig,
    index: &DatasetIndex,
) -> Result<Box<dyn SegmentationBackend>, PipelineError> {
    let mut settings = cfg.backend_settings.clone();
    if settings.workdir.is_none() {
        settings.workdir = Some(cfg.out.join("work"));
    }
    let init = BackendInit {
        settings,
        gt_resolver: Some(Arc::new(IndexGtResolver::new(index, cfg.resize))),
    };
    Ok(registry.create(&cfg.backend, &init)?)
}

/// Lazily loads `(image, mask)` training pairs from a dataset index at the
/// working resolution.
pub struct LazyTrainingSet<'a> {
    index: &'a DatasetIndex,
    resize: u32,
}

impl<'a> LazyTrainingSet<'a> {
    pub fn new(index: &'a DatasetIndex, resize: u32) -> Self {
        Self { index, resize }
    }
}

impl TrainingSet for LazyTrainingSet<'_> {
    fn len(&self) -> usize {
        self.index.len()
    }

    fn load(&self, idx: usize) -> Result<(Tensor, SegmentationMask), NetError> {
        let entry = &self.index.entries[idx];
        let image = dataset::load_image(&entry.image_path, self.resize).map_err(|e| {
            NetError::Sample {
                index: idx,
                message: e.to_string(),
            }
        })?;
        let gt = dataset::load_gt(&entry.gt_path, self.resize).map_err(|e| NetError::Sample {
            index: idx,
            message: e.to_string(),
        })?;
        Ok((image, gt))
    }
}

/// Trains a fresh scorer on the index and returns it with the loss history.
pub fn train_on_index(
    index: &DatasetIndex,
    cfg: &RunConfig,
) -> Result<(PptNet, TrainReport), PipelineError> {
    let registry = ppt::BackboneRegistry::with_builtins();
    let mut net = PptNet::new(cfg.ppt_config(), &registry)?;
    let data = LazyTrainingSet::new(index, cfg.resize);
    let report = ppt::train(&mut net, &data, &cfg.train)?;
    Ok((net, report))
}

/// Outcome of one image within a run.
#[derive(Debug, Clone, Serialize)]
pub struct ImageOutcome {
    pub id: String,
    pub report: Option<MetricsReport>,
    pub error: Option<String>,
}

/// Outcome of a dataset run.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub per_image: Vec<ImageOutcome>,
    /// Mean report over the successfully segmented images.
    pub report: MetricsReport,
    pub failures: usize,
}

#[derive(Serialize)]
struct PromptRecord<'a> {
    image_id: &'a str,
    #[serde(flatten)]
    selection: &'a kps::PromptSelection,
}

/// Runs score → select → two-pass segment → evaluate over every image,
/// writing prompts (JSON lines), masks (8-bit PNG) and the aggregate report
/// (JSON) under the configured output directory.
///
/// Backend failures are recorded per image and tallied; the run continues.
pub fn run_e2e(
    index: &DatasetIndex,
    cfg: &RunConfig,
    net: &PptNet,
    backend: &dyn SegmentationBackend,
) -> Result<RunOutcome, PipelineError> {
    let masks_dir = cfg.out.join("masks");
    let work_dir = cfg.out.join("work");
    std::fs::create_dir_all(&masks_dir).map_err(io_err(&masks_dir))?;
    std::fs::create_dir_all(&work_dir).map_err(io_err(&work_dir))?;

    let process = |entry: &dataset::DatasetEntry| -> Result<(kps::PromptSelection, SegmentationMask, MetricsReport), PipelineError> {
        let image = dataset::load_image(&entry.image_path, cfg.resize)?;
        let grid = generate_candidates(cfg.resize, cfg.resize, cfg.m)?;
        let scores = net.predict_scores(&image, &grid)?;
        let selection = kps::select_prompts(&scores, &grid, cfg.k, &cfg.thresholds)?;

        // Out-of-process backends read the image from disk in the working frame.
        let image_path = work_dir.join(format!("{}.png", entry.id));
        if !image_path.is_file() {
            save_image_tensor(&image, &image_path)?;
        }
        let image_ref = ImageRef {
            id: entry.id.clone(),
            path: Some(image_path),
            width: cfg.resize,
            height: cfg.resize,
        };
        let mask = crate::backend::two_pass_segment(&image_ref, &selection, backend, cfg.iterations)?;

        let report = if cfg.eval_at_original {
            let (ow, oh) = image::image_dimensions(&entry.image_path).map_err(|source| {
                PipelineError::Dataset(DatasetError::Decode {
                    path: entry.image_path.clone(),
                    source,
                })
            })?;
            let gt = SegmentationMask::load_png(&entry.gt_path)?.binarize(0.5);
            let pred = mask.resize_nearest(ow, oh);
            metrics::evaluate(&pred, &gt, &cfg.metrics)?
        } else {
            let gt = dataset::load_gt(&entry.gt_path, cfg.resize)?;
            metrics::evaluate(&mask, &gt, &cfg.metrics)?
        };
        Ok((selection, mask, report))
    };

    let workers = cfg.workers.max(1).min(index.len().max(1));
    let results: Vec<Result<_, PipelineError>> = if workers > 1 && backend.supports_concurrent() {
        let chunk = index.len().div_ceil(workers);
        std::thread::scope(|scope| {
            let handles: Vec<_> = index
                .entries
                .chunks(chunk)
                .map(|entries| scope.spawn(move || entries.iter().map(process).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("worker panicked"))
                .collect()
        })
    } else {
        index.entries.iter().map(process).collect()
    };

    let prompts_path = cfg.out.join("prompts.jsonl");
    let mut prompts_file =
        std::fs::File::create(&prompts_path).map_err(io_err(&prompts_path))?;
    let mut per_image = Vec::with_capacity(index.len());
    let mut reports = Vec::new();
    let mut failures = 0usize;
    for (entry, result) in index.entries.iter().zip(results) {
        match result {
            Ok((selection, mask, report)) => {
                let record = PromptRecord {
                    image_id: &entry.id,
                    selection: &selection,
                };
                serde_json::to_writer(&mut prompts_file, &record)?;
                prompts_file
                    .write_all(b"\n")
                    .map_err(io_err(&prompts_path))?;
                mask.save_png(&masks_dir.join(format!("{}.png", entry.id)))?;
                reports.push(report.clone());
                per_image.push(ImageOutcome {
                    id: entry.id.clone(),
                    report: Some(report),
                    error: None,
                });
            }
            Err(err) => {
                failures += 1;
                per_image.push(ImageOutcome {
                    id: entry.id.clone(),
                    report: None,
                    error: Some(err.to_string()),
                });
            }
        }
    }
    if reports.is_empty() {
        return Err(PipelineError::AllFailed(failures));
    }
    let report = MetricsReport::mean_of(&reports)?;

    let report_path = cfg.out.join("report.json");
    std::fs::write(
        &report_path,
        serde_json::to_vec_pretty(&report)?,
    )
    .map_err(io_err(&report_path))?;
    let detail_path = cfg.out.join("per_image.json");
    std::fs::write(
        &detail_path,
        serde_json::to_vec_pretty(&per_image)?,
    )
    .map_err(io_err(&detail_path))?;

    Ok(RunOutcome {
        per_image,
        report,
        failures,
    })
}

/// Writes a `[3, H, W]` tensor in `[0, 1]` as an RGB PNG.
pub fn save_image_tensor(image: &Tensor, path: &Path) -> Result<(), PipelineError> {
    let (h, w) = image.spatial();
    let mut img = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = |c: usize| {
                (image.channel(c)[y * w + x].clamp(0.0, 1.0) * 255.0).round() as u8
            };
            img.put_pixel(x as u32, y as u32, image::Rgb([px(0), px(1), px(2)]));
        }
    }
    img.save(path).map_err(|e| PipelineError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_matches_the_reported_setup() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.m, 16);
        assert_eq!(cfg.k, 5);
        assert_eq!(cfg.iterations, 2);
        assert_eq!(cfg.resize, 512);
        assert_eq!(cfg.thresholds, Thresholds::default());
        assert_eq!(cfg.train.learning_rate, 0.001);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.train.epochs, 300);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = RunConfig {
            m: 8,
            k: 3,
            backend: "constant".into(),
            ..Default::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.m, 8);
        assert_eq!(back.k, 3);
        assert_eq!(back.backend, "constant");
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg: RunConfig = toml::from_str("m = 4\n[dataset]\nname = \"synthetic\"\n").unwrap();
        assert_eq!(cfg.m, 4);
        assert_eq!(cfg.k, 5);
        assert_eq!(cfg.dataset.layout.image_dir, "Image");
    }
}
