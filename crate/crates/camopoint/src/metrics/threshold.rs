//! Shared machinery for the 255-threshold binarization sweeps.

use crate::mask::SegmentationMask;

/// Histogram-based counts of `pred >= k/255` inside and outside the ground
/// truth, for every integer level `k` in `0..=255`.
///
/// A prediction value `v` lands in bin `floor(255*v + 1e-9)`; the epsilon
/// keeps 8-bit-quantized values (`g/255`) on their exact bin despite float
/// rounding.
pub struct ThresholdCounts {
    ge_fg: [u64; 257],
    ge_bg: [u64; 257],
    pub n_fg: u64,
    pub n_bg: u64,
}

impl ThresholdCounts {
    pub fn new(pred: &SegmentationMask, gt: &SegmentationMask) -> Self {
        let mut hist_fg = [0u64; 256];
        let mut hist_bg = [0u64; 256];
        let mut n_fg = 0u64;
        let mut n_bg = 0u64;
        for (&p, &g) in pred.values().iter().zip(gt.values()) {
            let bin = ((p * 255.0 + 1e-9).floor() as usize).min(255);
            if g > 0.5 {
                hist_fg[bin] += 1;
                n_fg += 1;
            } else {
                hist_bg[bin] += 1;
                n_bg += 1;
            }
        }
        let mut ge_fg = [0u64; 257];
        let mut ge_bg = [0u64; 257];
        for k in (0..256).rev() {
            ge_fg[k] = ge_fg[k + 1] + hist_fg[k];
            ge_bg[k] = ge_bg[k + 1] + hist_bg[k];
        }
        Self {
            ge_fg,
            ge_bg,
            n_fg,
            n_bg,
        }
    }

    /// `(true positives, false positives)` when binarizing at `k/255`.
    pub fn at(&self, k: usize) -> (u64, u64) {
        (self.ge_fg[k], self.ge_bg[k])
    }

    pub fn total(&self) -> u64 {
        self.n_fg + self.n_bg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_direct_comparison() {
        let pred = SegmentationMask::from_fn(16, 4, |x, y| ((x + 16 * y) % 256) as f64 / 255.0);
        let gt = SegmentationMask::from_fn(16, 4, |x, _| if x % 3 == 0 { 1.0 } else { 0.0 });
        let counts = ThresholdCounts::new(&pred, &gt);
        for k in 0..=255usize {
            let t = k as f64 / 255.0;
            let mut tp = 0u64;
            let mut fp = 0u64;
            for (&p, &g) in pred.values().iter().zip(gt.values()) {
                if p >= t {
                    if g > 0.5 {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            assert_eq!(counts.at(k), (tp, fp), "threshold {k}");
        }
    }
}
