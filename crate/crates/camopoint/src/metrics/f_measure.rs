//! Threshold-swept F-measure and dependency-weighted F-measure.

use super::edt::distance_transform;
use super::threshold::ThresholdCounts;
use crate::mask::SegmentationMask;

const EPS: f64 = f64::EPSILON;

/// Mean F-beta over the 255 uniform thresholds `k/255`, `k = 1..=255`,
/// binarizing with `pred >= t`. `F = 0` at thresholds with no true positive.
pub fn f_mean(counts: &ThresholdCounts, beta_sq: f64) -> f64 {
    let mut sum = 0.0;
    for k in 1..=255usize {
        let (tp, fp) = counts.at(k);
        if tp == 0 {
            continue;
        }
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / counts.n_fg as f64;
        sum += (1.0 + beta_sq) * precision * recall / (beta_sq * precision + recall);
    }
    sum / 255.0
}

/// Weighted F-measure: errors on the background are substituted with the
/// error at the nearest foreground pixel, smoothed by a Gaussian window,
/// and weighted by a distance-decaying importance field.
pub fn f_weighted(
    pred: &SegmentationMask,
    gt: &SegmentationMask,
    beta_sq: f64,
    sigma: f64,
    window: usize,
) -> f64 {
    let (w, h) = (gt.width() as usize, gt.height() as usize);
    let fg: Vec<bool> = gt.values().iter().map(|&g| g > 0.5).collect();
    let n_fg = fg.iter().filter(|&&b| b).count();
    if n_fg == 0 {
        // The reference leaves this case undefined; score 0.
        return 0.0;
    }

    let error: Vec<f64> = pred
        .values()
        .iter()
        .zip(gt.values())
        .map(|(&p, &g)| (p - g).abs())
        .collect();

    // Background errors are read at the nearest foreground pixel.
    let (dist, nearest) = distance_transform(&fg, w, h);
    let mut substituted = error.clone();
    for i in 0..w * h {
        if !fg[i] {
            substituted[i] = error[nearest[i]];
        }
    }

    let smoothed = gaussian_filter(&substituted, w, h, sigma, window);

    // On the foreground, keep the smaller of the raw and smoothed error.
    let mut min_e = error;
    for i in 0..w * h {
        if fg[i] && smoothed[i] < min_e[i] {
            min_e[i] = smoothed[i];
        }
    }

    // Importance: 1 on the object, growing to 2 deep in the background.
    let decay = (0.5f64).ln() / 5.0;
    let mut tp_w = n_fg as f64;
    let mut fp_w = 0.0;
    let mut fg_err = 0.0;
    for i in 0..w * h {
        if fg[i] {
            fg_err += min_e[i];
        } else {
            fp_w += min_e[i] * (2.0 - (decay * dist[i]).exp());
        }
    }
    tp_w -= fg_err;

    let recall = 1.0 - fg_err / n_fg as f64;
    let precision = tp_w / (EPS + tp_w + fp_w);
    (1.0 + beta_sq) * recall * precision / (EPS + recall + beta_sq * precision)
}

/// Normalized `window`×`window` Gaussian correlation with zero padding.
fn gaussian_filter(data: &[f64], w: usize, h: usize, sigma: f64, window: usize) -> Vec<f64> {
    let half = (window / 2) as isize;
    let mut kernel = Vec::with_capacity(window * window);
    let mut total = 0.0;
    for ky in -half..=half {
        for kx in -half..=half {
            let v = (-((ky * ky + kx * kx) as f64) / (2.0 * sigma * sigma)).exp();
            kernel.push(v);
            total += v;
        }
    }
    for v in &mut kernel {
        *v /= total;
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for ky in -half..=half {
                let sy = y + ky;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                for kx in -half..=half {
                    let sx = x + kx;
                    if sx < 0 || sx >= w as isize {
                        continue;
                    }
                    acc += kernel[((ky + half) * window as isize + kx + half) as usize]
                        * data[sy as usize * w + sx as usize];
                }
            }
            out[y as usize * w + x as usize] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::threshold::ThresholdCounts;

    #[test]
    fn perfect_binary_prediction_scores_one() {
        let gt = SegmentationMask::from_fn(10, 10, |x, y| if x + y < 9 { 1.0 } else { 0.0 });
        let counts = ThresholdCounts::new(&gt, &gt);
        assert!((f_mean(&counts, 0.3) - 1.0).abs() < 1e-12);
        assert!((f_weighted(&gt, &gt, 1.0, 5.0, 7) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_ones_over_half_coverage_hits_the_closed_form() {
        // precision 1/2, recall 1 at every threshold:
        // F = 1.3 * 0.5 / (0.3 * 0.5 + 1) = 0.5652...
        let gt = SegmentationMask::from_fn(16, 16, |x, _| if x < 8 { 1.0 } else { 0.0 });
        let ones = SegmentationMask::from_fn(16, 16, |_, _| 1.0);
        let counts = ThresholdCounts::new(&ones, &gt);
        let expect = 1.3 * 0.5 / (0.3 * 0.5 + 1.0);
        assert!((f_mean(&counts, 0.3) - expect).abs() < 1e-9);
    }

    #[test]
    fn all_zero_prediction_scores_zero() {
        let gt = SegmentationMask::from_fn(8, 8, |x, _| if x < 4 { 1.0 } else { 0.0 });
        let zeros = SegmentationMask::zeros(8, 8);
        let counts = ThresholdCounts::new(&zeros, &gt);
        assert_eq!(f_mean(&counts, 0.3), 0.0);
        let wf = f_weighted(&zeros, &gt, 1.0, 5.0, 7);
        assert!(wf.abs() < 1e-9, "got {wf}");
    }

    #[test]
    fn gaussian_kernel_preserves_mass_in_the_interior() {
        let mut data = vec![0.0; 15 * 15];
        data[7 * 15 + 7] = 1.0;
        let out = gaussian_filter(&data, 15, 15, 5.0, 7);
        let total: f64 = out.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
