//! Enhanced-alignment measure over the 255-threshold sweep.
//!
//! The per-threshold value follows the reference alignment formula; the
//! only deliberate difference is normalizing by N instead of N-1 so that a
//! perfect prediction scores exactly 1 on any image size (the relative
//! deviation from the reference is 1/(N-1)).

use super::threshold::ThresholdCounts;

const EPS: f64 = f64::EPSILON;

/// `(e_mean, e_max)` over thresholds `k/255`, `k = 1..=255`.
pub fn e_measures(counts: &ThresholdCounts) -> (f64, f64) {
    let n = counts.total() as f64;
    let n_fg = counts.n_fg as f64;
    let n_bg = counts.n_bg as f64;
    let mut sum = 0.0;
    let mut max = f64::NEG_INFINITY;
    for k in 1..=255usize {
        let (tp, fp) = counts.at(k);
        let e = if counts.n_fg == 0 {
            // Empty ground truth: score the fraction the prediction leaves empty.
            (n - (tp + fp) as f64) / n
        } else if counts.n_bg == 0 {
            (tp + fp) as f64 / n
        } else {
            let (tp, fp) = (tp as f64, fp as f64);
            let fn_ = n_fg - tp;
            let tn = n_bg - fp;
            let mu_fm = (tp + fp) / n;
            let mu_gt = n_fg / n;
            // Centered values per (gt, fm) combination.
            let enhanced = |x: f64, y: f64| {
                let align = 2.0 * x * y / (x * x + y * y + EPS);
                (align + 1.0) * (align + 1.0) / 4.0
            };
            let gt_fg = 1.0 - mu_gt;
            let gt_bg = -mu_gt;
            let fm_on = 1.0 - mu_fm;
            let fm_off = -mu_fm;
            (tp * enhanced(gt_fg, fm_on)
                + fn_ * enhanced(gt_fg, fm_off)
                + fp * enhanced(gt_bg, fm_on)
                + tn * enhanced(gt_bg, fm_off))
                / n
        };
        sum += e;
        if e > max {
            max = e;
        }
    }
    (sum / 255.0, max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::SegmentationMask;

    #[test]
    fn perfect_binary_prediction_scores_one() {
        let gt = SegmentationMask::from_fn(9, 7, |x, y| if (x + y) % 2 == 0 { 1.0 } else { 0.0 });
        let counts = ThresholdCounts::new(&gt, &gt);
        let (e_mean, e_max) = e_measures(&counts);
        assert!((e_mean - 1.0).abs() < 1e-6, "e_mean {e_mean}");
        assert!((e_max - 1.0).abs() < 1e-6);
    }

    #[test]
    fn max_dominates_mean() {
        let gt = SegmentationMask::from_fn(12, 12, |x, _| if x < 5 { 1.0 } else { 0.0 });
        let pred = SegmentationMask::from_fn(12, 12, |x, y| ((x * 7 + y * 3) % 12) as f64 / 11.0);
        let counts = ThresholdCounts::new(&pred, &gt);
        let (e_mean, e_max) = e_measures(&counts);
        assert!(e_max >= e_mean);
        assert!((0.0..=1.0).contains(&e_mean));
    }

    #[test]
    fn inverted_prediction_matches_direct_evaluation() {
        // Balanced 4x4 case evaluated against a literal per-pixel oracle.
        let gt = SegmentationMask::from_fn(4, 4, |x, _| if x < 2 { 1.0 } else { 0.0 });
        let pred = SegmentationMask::from_fn(4, 4, |x, _| if x < 2 { 0.0 } else { 1.0 });
        let counts = ThresholdCounts::new(&pred, &gt);
        let (e_mean, e_max) = e_measures(&counts);

        // Oracle: binarized prediction equals the inverted gt at every
        // threshold; compute the alignment matrix pixel by pixel.
        let n = 16.0;
        let mu = 0.5;
        let mut sum = 0.0;
        for (&g, &p) in gt.values().iter().zip(pred.values()) {
            let x = g - mu;
            let y = p - mu;
            let align = 2.0 * x * y / (x * x + y * y + f64::EPSILON);
            sum += (align + 1.0) * (align + 1.0) / 4.0;
        }
        let expect = sum / n;
        assert!((e_mean - expect).abs() < 1e-12);
        assert!((e_max - expect).abs() < 1e-12);
    }
}
