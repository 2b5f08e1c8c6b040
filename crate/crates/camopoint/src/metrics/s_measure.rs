//! Structure measure: object-aware and region-aware structural similarity
//! between a continuous prediction and a binary ground truth.

use crate::mask::SegmentationMask;

const EPS: f64 = f64::EPSILON;

/// S = alpha * S_object + (1 - alpha) * S_region, clamped at 0.
///
/// Degenerate ground truths follow the reference conventions: an empty
/// ground truth scores `1 - mean(pred)`, an all-foreground one `mean(pred)`.
pub fn s_measure(pred: &SegmentationMask, gt: &SegmentationMask, alpha: f64) -> f64 {
    let mu = gt.mean();
    if mu == 0.0 {
        return 1.0 - pred.mean();
    }
    if mu == 1.0 {
        return pred.mean();
    }
    let s = alpha * s_object(pred, gt) + (1.0 - alpha) * s_region(pred, gt);
    s.max(0.0)
}

fn object_score(values: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = values.collect();
    if vals.is_empty() {
        return 0.0;
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let std = if vals.len() < 2 {
        0.0
    } else {
        (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    2.0 * mean / (mean * mean + 1.0 + std + EPS)
}

fn s_object(pred: &SegmentationMask, gt: &SegmentationMask) -> f64 {
    let fg = pred
        .values()
        .iter()
        .zip(gt.values())
        .filter(|(_, &g)| g > 0.5)
        .map(|(&p, _)| p);
    let bg = pred
        .values()
        .iter()
        .zip(gt.values())
        .filter(|(_, &g)| g <= 0.5)
        .map(|(&p, _)| 1.0 - p);
    let mu = gt.mean();
    mu * object_score(fg) + (1.0 - mu) * object_score(bg)
}

/// Foreground centroid, 1-based and rounded half away from zero, matching
/// the reference convention. Returns `(cx, cy)` with `1 <= cx <= width`.
fn centroid(gt: &SegmentationMask) -> (usize, usize) {
    let (w, h) = (gt.width() as usize, gt.height() as usize);
    let mut total = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for y in 0..h {
        for x in 0..w {
            let g = gt.get(x as u32, y as u32);
            if g > 0.5 {
                total += 1.0;
                sx += (x + 1) as f64;
                sy += (y + 1) as f64;
            }
        }
    }
    if total == 0.0 {
        ((w as f64 / 2.0).round() as usize, (h as f64 / 2.0).round() as usize)
    } else {
        ((sx / total).round() as usize, (sy / total).round() as usize)
    }
}

struct Region {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

fn region_ssim(pred: &SegmentationMask, gt: &SegmentationMask, r: &Region) -> f64 {
    let n = ((r.x1 - r.x0) * (r.y1 - r.y0)) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let mut sum_p = 0.0;
    let mut sum_g = 0.0;
    for y in r.y0..r.y1 {
        for x in r.x0..r.x1 {
            sum_p += pred.get(x as u32, y as u32);
            sum_g += gt.get(x as u32, y as u32);
        }
    }
    let mp = sum_p / n;
    let mg = sum_g / n;
    let mut var_p = 0.0;
    let mut var_g = 0.0;
    let mut cov = 0.0;
    for y in r.y0..r.y1 {
        for x in r.x0..r.x1 {
            let dp = pred.get(x as u32, y as u32) - mp;
            let dg = gt.get(x as u32, y as u32) - mg;
            var_p += dp * dp;
            var_g += dg * dg;
            cov += dp * dg;
        }
    }
    var_p /= n - 1.0 + EPS;
    var_g /= n - 1.0 + EPS;
    cov /= n - 1.0 + EPS;

    let alpha = 4.0 * mp * mg * cov;
    let beta = (mp * mp + mg * mg) * (var_p + var_g);
    if alpha != 0.0 {
        alpha / (beta + EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn s_region(pred: &SegmentationMask, gt: &SegmentationMask) -> f64 {
    let (w, h) = (gt.width() as usize, gt.height() as usize);
    let (cx, cy) = centroid(gt);
    let area = (w * h) as f64;
    let w1 = (cx * cy) as f64 / area;
    let w2 = ((w - cx) * cy) as f64 / area;
    let w3 = (cx * (h - cy)) as f64 / area;
    let w4 = 1.0 - w1 - w2 - w3;
    let quads = [
        (w1, Region { x0: 0, x1: cx, y0: 0, y1: cy }),
        (w2, Region { x0: cx, x1: w, y0: 0, y1: cy }),
        (w3, Region { x0: 0, x1: cx, y0: cy, y1: h }),
        (w4, Region { x0: cx, x1: w, y0: cy, y1: h }),
    ];
    quads
        .iter()
        .map(|(weight, region)| {
            if *weight <= 0.0 {
                0.0
            } else {
                weight * region_ssim(pred, gt, region)
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_mask() -> SegmentationMask {
        SegmentationMask::from_fn(16, 16, |x, _| if x < 8 { 1.0 } else { 0.0 })
    }

    #[test]
    fn perfect_binary_prediction_scores_one() {
        let gt = half_mask();
        let s = s_measure(&gt, &gt, 0.5);
        assert!((s - 1.0).abs() < 1e-6, "got {s}");
    }

    #[test]
    fn empty_gt_conventions() {
        let gt = SegmentationMask::zeros(12, 12);
        let zeros = SegmentationMask::zeros(12, 12);
        let ones = SegmentationMask::from_fn(12, 12, |_, _| 1.0);
        assert_eq!(s_measure(&zeros, &gt, 0.5), 1.0);
        assert_eq!(s_measure(&ones, &gt, 0.5), 0.0);
    }

    #[test]
    fn full_gt_convention() {
        let gt = SegmentationMask::from_fn(6, 6, |_, _| 1.0);
        let pred = SegmentationMask::from_fn(6, 6, |_, _| 0.25);
        assert!((s_measure(&pred, &gt, 0.5) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn worse_predictions_score_lower() {
        let gt = half_mask();
        let inverted = SegmentationMask::from_fn(16, 16, |x, _| if x < 8 { 0.0 } else { 1.0 });
        let blurry = SegmentationMask::from_fn(16, 16, |x, _| if x < 8 { 0.8 } else { 0.2 });
        let s_perfect = s_measure(&gt, &gt, 0.5);
        let s_blurry = s_measure(&blurry, &gt, 0.5);
        let s_inverted = s_measure(&inverted, &gt, 0.5);
        assert!(s_perfect > s_blurry && s_blurry > s_inverted);
        assert!((0.0..=1.0).contains(&s_inverted));
    }
}
