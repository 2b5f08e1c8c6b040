//! Uniform M×M candidate grids and per-cell supervision targets.
//!
//! The image is partitioned into M×M cells; the center of each cell is one
//! unlabeled candidate point. Ground-truth masks are average-pooled over the
//! same cells to give each candidate a presence probability target.

use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::mask::SegmentationMask;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid side {m} must be at least 1 and at most min(width, height) = {limit}")]
    BadGridSide { m: usize, limit: u32 },
    #[error("image dimensions {width}x{height} are degenerate")]
    EmptyImage { width: u32, height: u32 },
    #[error("expected {expected} values for an {m}x{m} grid, got {got}")]
    LengthMismatch {
        m: usize,
        expected: usize,
        got: usize,
    },
}

/// One candidate: the center of grid cell `(row, col)` in pixel coordinates.
///
/// `index = row * M + col` is the canonical row-major index used for
/// deterministic tie-breaking everywhere downstream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidatePoint {
    pub index: usize,
    pub row: usize,
    pub col: usize,
    pub x: f64,
    pub y: f64,
}

/// The N = M×M candidate points of one image, in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    pub m: usize,
    pub width_px: u32,
    pub height_px: u32,
    pub points: Vec<CandidatePoint>,
}

impl CandidateGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

// Serializes as {"points": [[x, y], ...]}.
impl Serialize for CandidateGrid {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            points: PointList<'a>,
        }
        struct PointList<'a>(&'a [CandidatePoint]);
        impl Serialize for PointList<'_> {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                let mut seq = serializer.serialize_seq(Some(self.0.len()))?;
                for p in self.0 {
                    seq.serialize_element(&[p.x, p.y])?;
                }
                seq.end()
            }
        }
        Repr {
            points: PointList(&self.points),
        }
        .serialize(serializer)
    }
}

/// Per-cell supervision targets: the mean ground-truth value of each cell.
///
/// Serializes as `{"M": int, "width": int, "height": int, "values": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetGrid {
    #[serde(rename = "M")]
    pub m: usize,
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
}

/// Half-open pixel range `[lo, hi)` of cell `k` along an axis of length `dim`.
///
/// Boundaries sit at `round(k * dim / M)`; when `dim` is not divisible by `M`
/// the later cells absorb the remainders, so the cells always tile the axis.
pub fn cell_bounds(dim: u32, m: usize, k: usize) -> (usize, usize) {
    debug_assert!(k < m);
    let edge = |i: usize| (i as f64 * dim as f64 / m as f64).round() as usize;
    (edge(k), edge(k + 1))
}

/// Lays an M×M grid of cell-center candidates over a `width_px`×`height_px`
/// image, in row-major order.
pub fn generate_candidates(
    width_px: u32,
    height_px: u32,
    m: usize,
) -> Result<CandidateGrid, GridError> {
    if width_px == 0 || height_px == 0 {
        return Err(GridError::EmptyImage {
            width: width_px,
            height: height_px,
        });
    }
    let limit = width_px.min(height_px);
    if m == 0 || m as u64 > limit as u64 {
        return Err(GridError::BadGridSide { m, limit });
    }
    let mut points = Vec::with_capacity(m * m);
    for row in 0..m {
        for col in 0..m {
            points.push(CandidatePoint {
                index: row * m + col,
                row,
                col,
                x: (col as f64 + 0.5) * width_px as f64 / m as f64,
                y: (row as f64 + 0.5) * height_px as f64 / m as f64,
            });
        }
    }
    Ok(CandidateGrid {
        m,
        width_px,
        height_px,
        points,
    })
}

/// Average-pools a ground-truth mask over the M×M cell partition.
pub fn pool_mask_targets(mask: &SegmentationMask, m: usize) -> Result<TargetGrid, GridError> {
    let (width, height) = (mask.width(), mask.height());
    let limit = width.min(height);
    if m == 0 || m as u64 > limit as u64 {
        return Err(GridError::BadGridSide { m, limit });
    }
    let mut values = Vec::with_capacity(m * m);
    for row in 0..m {
        let (y0, y1) = cell_bounds(height, m, row);
        for col in 0..m {
            let (x0, x1) = cell_bounds(width, m, col);
            let mut sum = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    sum += mask.get(x as u32, y as u32);
                }
            }
            values.push(sum / ((y1 - y0) * (x1 - x0)) as f64);
        }
    }
    Ok(TargetGrid {
        m,
        width,
        height,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grid_512_gives_256_points() {
        let grid = generate_candidates(512, 512, 16).unwrap();
        assert_eq!(grid.len(), 256);
        for (i, p) in grid.points.iter().enumerate() {
            assert_eq!(p.index, i);
            assert_eq!(p.index, p.row * 16 + p.col);
            assert!(p.x > 0.0 && p.x < 512.0);
            assert!(p.y > 0.0 && p.y < 512.0);
        }
    }

    #[test]
    fn single_cell_grid_is_the_image_center() {
        let grid = generate_candidates(512, 512, 1).unwrap();
        assert_eq!(grid.len(), 1);
        assert_eq!((grid.points[0].x, grid.points[0].y), (256.0, 256.0));
    }

    #[test]
    fn rectangular_grid_centers() {
        let grid = generate_candidates(100, 60, 2).unwrap();
        let got: Vec<(f64, f64)> = grid.points.iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(
            got,
            vec![(25.0, 15.0), (75.0, 15.0), (25.0, 45.0), (75.0, 45.0)]
        );
    }

    #[test]
    fn rejects_bad_grid_sides() {
        assert!(matches!(
            generate_candidates(16, 16, 0),
            Err(GridError::BadGridSide { .. })
        ));
        assert!(matches!(
            generate_candidates(16, 8, 9),
            Err(GridError::BadGridSide { .. })
        ));
        assert!(generate_candidates(16, 16, 16).is_ok());
    }

    #[test]
    fn grid_json_schema() {
        let grid = generate_candidates(100, 60, 2).unwrap();
        let json = serde_json::to_value(&grid).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"points": [[25.0, 15.0], [75.0, 15.0], [25.0, 45.0], [75.0, 45.0]]})
        );
    }

    #[test]
    fn target_json_schema() {
        let t = TargetGrid {
            m: 1,
            width: 2,
            height: 2,
            values: vec![0.25],
        };
        let json = serde_json::to_value(&t).unwrap();
        assert_eq!(
            json,
            serde_json::json!({"M": 1, "width": 2, "height": 2, "values": [0.25]})
        );
    }

    #[test]
    fn constant_masks_pool_to_constants() {
        let ones = SegmentationMask::from_fn(512, 512, |_, _| 1.0);
        let t = pool_mask_targets(&ones, 16).unwrap();
        assert_eq!(t.values.len(), 256);
        assert!(t.values.iter().all(|&v| v == 1.0));

        let zeros = SegmentationMask::zeros(64, 64);
        let t = pool_mask_targets(&zeros, 4).unwrap();
        assert!(t.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn quarter_mask_pools_to_one_hot() {
        // 32x32 mask with only the top-left 16x16 block set, M = 2.
        let mask = SegmentationMask::from_fn(32, 32, |x, y| if x < 16 && y < 16 { 1.0 } else { 0.0 });
        let t = pool_mask_targets(&mask, 2).unwrap();
        // Oracle: count pixels in each 16x16 cell directly.
        let mut expected = [0.0f64; 4];
        for y in 0..32 {
            for x in 0..32 {
                let cell = (y / 16) * 2 + x / 16;
                expected[cell] += mask.get(x, y) / 256.0;
            }
        }
        assert_eq!(t.values, expected.to_vec());
        assert_eq!(t.values, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_empty_mask() {
        assert!(SegmentationMask::new(0, 0, vec![]).is_err());
        let mask = SegmentationMask::from_fn(3, 3, |_, _| 0.0);
        assert!(matches!(
            pool_mask_targets(&mask, 4),
            Err(GridError::BadGridSide { .. })
        ));
    }

    proptest! {
        /// Cells tile the image: pooled cell sums add back up to the mask sum.
        #[test]
        fn partition_preserves_mass(
            width in 1u32..40,
            height in 1u32..40,
            m in 1usize..8,
            seed in any::<u64>(),
        ) {
            prop_assume!(m as u32 <= width.min(height));
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mask = SegmentationMask::from_fn(width, height, |_, _| {
                if rng.gen_bool(0.4) { 1.0 } else { 0.0 }
            });
            let t = pool_mask_targets(&mask, m).unwrap();

            // Disjoint cover: every pixel belongs to exactly one cell.
            let mut covered = vec![0u8; (width * height) as usize];
            let mut weighted = 0.0;
            for row in 0..m {
                let (y0, y1) = cell_bounds(height, m, row);
                for col in 0..m {
                    let (x0, x1) = cell_bounds(width, m, col);
                    prop_assert!(x1 > x0 && y1 > y0);
                    for y in y0..y1 {
                        for x in x0..x1 {
                            covered[y * width as usize + x] += 1;
                        }
                    }
                    weighted += t.values[row * m + col] * ((x1 - x0) * (y1 - y0)) as f64;
                }
            }
            prop_assert!(covered.iter().all(|&c| c == 1));
            let mass: f64 = mask.values().iter().sum();
            prop_assert!((weighted - mass).abs() < 1e-6);
        }

        /// Raising any pixel to foreground never lowers a target.
        #[test]
        fn pooling_is_monotone(
            seed in any::<u64>(),
            px in 0u32..24,
            py in 0u32..24,
            m in 1usize..6,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let base = SegmentationMask::from_fn(24, 24, |_, _| {
                if rng.gen_bool(0.3) { 1.0 } else { 0.0 }
            });
            let mut raised = base.clone();
            raised.set(px, py, 1.0);
            let t0 = pool_mask_targets(&base, m).unwrap();
            let t1 = pool_mask_targets(&raised, m).unwrap();
            for (a, b) in t0.values.iter().zip(t1.values.iter()) {
                prop_assert!(b >= a);
            }
        }
    }
}
