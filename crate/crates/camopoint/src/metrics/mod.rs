//! The six standard evaluation measures for camouflaged-object predictions:
//! structure measure, weighted/mean F, mean/max enhanced alignment, and MAE.

mod e_measure;
mod edt;
mod f_measure;
mod s_measure;
mod threshold;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use e_measure::e_measures as e_measures_from_counts;
pub use edt::distance_transform;
pub use f_measure::{f_mean as f_mean_from_counts, f_weighted};
pub use s_measure::s_measure;
pub use threshold::ThresholdCounts;

use crate::mask::SegmentationMask;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("prediction is {pred_w}x{pred_h} but ground truth is {gt_w}x{gt_h}")]
    DimMismatch {
        pred_w: u32,
        pred_h: u32,
        gt_w: u32,
        gt_h: u32,
    },
    #[error("ground truth must be binary")]
    NonBinaryGroundTruth,
    #[error("cannot aggregate an empty report list")]
    EmptyReportList,
}

/// Constants of record for all six measures.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Object/region mix of the structure measure.
    pub s_alpha: f64,
    /// Beta^2 of the threshold-swept F-measure.
    pub f_beta_sq: f64,
    /// Beta^2 of the weighted F-measure (its reference uses 1).
    pub wf_beta_sq: f64,
    /// Gaussian sigma of the weighted F dependency window.
    pub wf_sigma: f64,
    /// Side length of that window.
    pub wf_window: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            s_alpha: 0.5,
            f_beta_sq: 0.3,
            wf_beta_sq: 1.0,
            wf_sigma: 5.0,
            wf_window: 7,
        }
    }
}

/// The six measures for one image or averaged over a dataset.
///
/// Serializes as `{"Sm", "Fw", "Fm", "Em", "Ex", "MAE", "n"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "Sm")]
    pub s_measure: f64,
    #[serde(rename = "Fw")]
    pub f_weighted: f64,
    #[serde(rename = "Fm")]
    pub f_mean: f64,
    #[serde(rename = "Em")]
    pub e_mean: f64,
    #[serde(rename = "Ex")]
    pub e_max: f64,
    #[serde(rename = "MAE")]
    pub mae: f64,
    #[serde(rename = "n")]
    pub n_images: usize,
}

impl MetricsReport {
    /// Arithmetic mean of per-image reports.
    pub fn mean_of(reports: &[MetricsReport]) -> Result<MetricsReport, MetricError> {
        if reports.is_empty() {
            return Err(MetricError::EmptyReportList);
        }
        let n = reports.len() as f64;
        let sum = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Ok(MetricsReport {
            s_measure: sum(|r| r.s_measure),
            f_weighted: sum(|r| r.f_weighted),
            f_mean: sum(|r| r.f_mean),
            e_mean: sum(|r| r.e_mean),
            e_max: sum(|r| r.e_max),
            mae: sum(|r| r.mae),
            n_images: reports.iter().map(|r| r.n_images).sum(),
        })
    }
}

/// Mean absolute error between two equal-size masks.
pub fn mae(pred: &SegmentationMask, gt: &SegmentationMask) -> Result<f64, MetricError> {
    check_dims(pred, gt)?;
    Ok(pred
        .values()
        .iter()
        .zip(gt.values())
        .map(|(p, g)| (p - g).abs())
        .sum::<f64>()
        / pred.len() as f64)
}

/// `(f_weighted, f_mean)` per the configured constants.
pub fn f_measures(
    pred: &SegmentationMask,
    gt: &SegmentationMask,
    cfg: &MetricConfig,
) -> Result<(f64, f64), MetricError> {
    check_binary(pred, gt)?;
    let counts = ThresholdCounts::new(pred, gt);
    Ok((
        f_weighted(pred, gt, cfg.wf_beta_sq, cfg.wf_sigma, cfg.wf_window),
        f_mean_from_counts(&counts, cfg.f_beta_sq),
    ))
}

/// `(e_mean, e_max)` over the 255-threshold sweep.
pub fn e_measures(
    pred: &SegmentationMask,
    gt: &SegmentationMask,
) -> Result<(f64, f64), MetricError> {
    check_binary(pred, gt)?;
    let counts = ThresholdCounts::new(pred, gt);
    Ok(e_measures_from_counts(&counts))
}

/// Structure measure with the configured alpha.
pub fn structure_measure(
    pred: &SegmentationMask,
    gt: &SegmentationMask,
    cfg: &MetricConfig,
) -> Result<f64, MetricError> {
    check_binary(pred, gt)?;
    Ok(s_measure(pred, gt, cfg.s_alpha))
}

/// All six measures of one prediction.
pub fn evaluate(
    pred: &SegmentationMask,
    gt: &SegmentationMask,
    cfg: &MetricConfig,
) -> Result<MetricsReport, MetricError> {
    check_binary(pred, gt)?;
    let counts = ThresholdCounts::new(pred, gt);
    let (e_mean, e_max) = e_measures_from_counts(&counts);
    Ok(MetricsReport {
        s_measure: s_measure(pred, gt, cfg.s_alpha),
        f_weighted: f_weighted(pred, gt, cfg.wf_beta_sq, cfg.wf_sigma, cfg.wf_window),
        f_mean: f_mean_from_counts(&counts, cfg.f_beta_sq),
        e_mean,
        e_max,
        mae: mae(pred, gt)?,
        n_images: 1,
    })
}

fn check_dims(pred: &SegmentationMask, gt: &SegmentationMask) -> Result<(), MetricError> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(MetricError::DimMismatch {
            pred_w: pred.width(),
            pred_h: pred.height(),
            gt_w: gt.width(),
            gt_h: gt.height(),
        });
    }
    Ok(())
}

fn check_binary(pred: &SegmentationMask, gt: &SegmentationMask) -> Result<(), MetricError> {
    check_dims(pred, gt)?;
    if !gt.is_binary() {
        return Err(MetricError::NonBinaryGroundTruth);
    }
    Ok(())
}
