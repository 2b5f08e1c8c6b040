//! Synthetic dataset generator: one soft-textured ellipse per image on a
//! noisy background, with a crisp binary mask. Lets the whole pipeline run
//! and be tested without any external assets.

use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mask::SegmentationMask;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("failed to create {0}: {1}")]
    CreateDir(std::path::PathBuf, std::io::Error),
    #[error("failed to write {0}: {1}")]
    Write(std::path::PathBuf, image::ImageError),
    #[error("mask write failed: {0}")]
    Mask(#[from] crate::mask::MaskError),
}

/// Smooth value noise: a coarse random lattice, bilinearly interpolated.
struct ValueNoise {
    grid: Vec<f64>,
    cells: usize,
    size: u32,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, size: u32, cells: usize, lo: f64, hi: f64) -> Self {
        let grid = (0..(cells + 1) * (cells + 1))
            .map(|_| rng.gen_range(lo..hi))
            .collect();
        Self { grid, cells, size }
    }

    fn at(&self, x: u32, y: u32) -> f64 {
        let fx = x as f64 / self.size as f64 * self.cells as f64;
        let fy = y as f64 / self.size as f64 * self.cells as f64;
        let x0 = (fx.floor() as usize).min(self.cells - 1);
        let y0 = (fy.floor() as usize).min(self.cells - 1);
        let tx = fx - x0 as f64;
        let ty = fy - y0 as f64;
        let stride = self.cells + 1;
        let v00 = self.grid[y0 * stride + x0];
        let v01 = self.grid[y0 * stride + x0 + 1];
        let v10 = self.grid[(y0 + 1) * stride + x0];
        let v11 = self.grid[(y0 + 1) * stride + x0 + 1];
        v00 * (1.0 - tx) * (1.0 - ty) + v01 * tx * (1.0 - ty) + v10 * (1.0 - tx) * ty + v11 * tx * ty
    }
}

struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos_t: f64,
    sin_t: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = dx * self.cos_t + dy * self.sin_t;
        let v = -dx * self.sin_t + dy * self.cos_t;
        (u / self.a) * (u / self.a) + (v / self.b) * (v / self.b) <= 1.0
    }
}

/// Generates `count` images of `size`×`size` pixels under `dir/Image` with
/// binary masks under `dir/GT`. Fully determined by `seed`.
pub fn generate(dir: &Path, count: usize, size: u32, seed: u64) -> Result<Vec<String>, FixtureError> {
    let image_dir = dir.join("Image");
    let gt_dir = dir.join("GT");
    for d in [&image_dir, &gt_dir] {
        std::fs::create_dir_all(d).map_err(|e| FixtureError::CreateDir(d.clone(), e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = Vec::with_capacity(count);
    for i in 0..count {
        let id = format!("synthetic_{i:04}");
        let s = size as f64;

        // One fat blob per image, well inside the frame.
        let ellipse = Ellipse {
            cx: s * rng.gen_range(0.38..0.62),
            cy: s * rng.gen_range(0.38..0.62),
            a: s * rng.gen_range(0.22..0.34),
            b: s * rng.gen_range(0.22..0.34),
            cos_t: 0.0,
            sin_t: 0.0,
        };
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let ellipse = Ellipse {
            cos_t: theta.cos(),
            sin_t: theta.sin(),
            ..ellipse
        };

        let bg_base = ValueNoise::new(&mut rng, size, 8, 0.30, 0.52);
        let fg_base = ValueNoise::new(&mut rng, size, 6, 0.55, 0.75);
        let tint = [
            rng.gen_range(-0.05..0.05),
            rng.gen_range(-0.05..0.05),
            rng.gen_range(-0.05..0.05),
        ];

        let mut img = RgbImage::new(size, size);
        let mask = SegmentationMask::from_fn(size, size, |x, y| {
            if ellipse.contains(x as f64 + 0.5, y as f64 + 0.5) {
                1.0
            } else {
                0.0
            }
        });
        for y in 0..size {
            for x in 0..size {
                let inside = mask.get(x, y) > 0.5;
                let base = if inside {
                    fg_base.at(x, y)
                } else {
                    bg_base.at(x, y)
                };
                let grain: f64 = rng.gen_range(-0.04..0.04);
                let px = |c: usize| -> u8 {
                    let v: f64 = base + grain + tint[c];
                    (v.clamp(0.0, 1.0) * 255.0).round() as u8
                };
                img.put_pixel(x, y, Rgb([px(0), px(1), px(2)]));
            }
        }

        let img_path = image_dir.join(format!("{id}.png"));
        img.save(&img_path)
            .map_err(|e| FixtureError::Write(img_path.clone(), e))?;
        mask.save_png(&gt_dir.join(format!("{id}.png")))?;
        ids.push(id);
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_deterministic_per_seed() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate(a.path(), 2, 48, 42).unwrap();
        generate(b.path(), 2, 48, 42).unwrap();
        for sub in ["Image", "GT"] {
            for i in 0..2 {
                let name = format!("synthetic_{i:04}.png");
                let x = std::fs::read(a.path().join(sub).join(&name)).unwrap();
                let y = std::fs::read(b.path().join(sub).join(&name)).unwrap();
                assert_eq!(x, y, "{sub}/{name} differs");
            }
        }
    }

    #[test]
    fn masks_are_binary_with_a_fat_object() {
        let dir = tempfile::tempdir().unwrap();
        generate(dir.path(), 4, 64, 3).unwrap();
        for i in 0..4 {
            let mask =
                SegmentationMask::load_png(&dir.path().join("GT").join(format!("synthetic_{i:04}.png")))
                    .unwrap();
            assert!(mask.is_binary());
            let coverage = mask.mean();
            assert!(
                (0.1..0.6).contains(&coverage),
                "image {i}: coverage {coverage}"
            );
        }
    }
}
