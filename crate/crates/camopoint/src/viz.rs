//! Star-glyph overlays of the selected prompts.

use std::path::Path;

use image::{Rgb, RgbImage};
use thiserror::Error;

use crate::kps::PromptSelection;

#[derive(Debug, Error)]
pub enum VizError {
    #[error("failed to read image {0}: {1}")]
    Read(std::path::PathBuf, image::ImageError),
    #[error("failed to write overlay {0}: {1}")]
    Write(std::path::PathBuf, image::ImageError),
    #[error("prompt ({x:.1}, {y:.1}) is outside the {width}x{height} image")]
    OutOfBounds { x: f64, y: f64, width: u32, height: u32 },
}

pub const POSITIVE_COLOR: Rgb<u8> = Rgb([255, 225, 0]);
pub const NEGATIVE_COLOR: Rgb<u8> = Rgb([235, 20, 20]);

/// Draws yellow stars at positive points and red stars at negatives,
/// composited over `image`, and writes the result as a PNG.
pub fn visualize(
    image: &RgbImage,
    selection: &PromptSelection,
    out_path: &Path,
) -> Result<(), VizError> {
    let (w, h) = image.dimensions();
    for p in selection.positives().chain(selection.negatives()) {
        if p.x < 0.0 || p.y < 0.0 || p.x >= w as f64 || p.y >= h as f64 {
            return Err(VizError::OutOfBounds {
                x: p.x,
                y: p.y,
                width: w,
                height: h,
            });
        }
    }
    let mut canvas = image.clone();
    let radius = (w.min(h) as f64 / 24.0).max(4.0);
    for t in &selection.triples {
        for np in &t.nps {
            draw_star(&mut canvas, np.x, np.y, radius, NEGATIVE_COLOR);
        }
    }
    // Positives last so they stay visible when glyphs overlap.
    for t in &selection.triples {
        draw_star(&mut canvas, t.pp.x, t.pp.y, radius, POSITIVE_COLOR);
    }
    canvas
        .save(out_path)
        .map_err(|e| VizError::Write(out_path.to_path_buf(), e))
}

/// Loads the image, overlays the selection, writes the PNG.
pub fn visualize_file(
    image_path: &Path,
    selection: &PromptSelection,
    out_path: &Path,
) -> Result<(), VizError> {
    let image = image::open(image_path)
        .map_err(|e| VizError::Read(image_path.to_path_buf(), e))?
        .to_rgb8();
    visualize(&image, selection, out_path)
}

/// Filled five-pointed star centered at `(cx, cy)`.
fn draw_star(canvas: &mut RgbImage, cx: f64, cy: f64, radius: f64, color: Rgb<u8>) {
    let inner = radius * 0.42;
    let mut vx = [0.0f64; 10];
    let mut vy = [0.0f64; 10];
    for i in 0..10 {
        let r = if i % 2 == 0 { radius } else { inner };
        let angle = -std::f64::consts::FRAC_PI_2 + i as f64 * std::f64::consts::PI / 5.0;
        vx[i] = cx + r * angle.cos();
        vy[i] = cy + r * angle.sin();
    }
    let (w, h) = canvas.dimensions();
    let y_min = (cy - radius).floor().max(0.0) as u32;
    let y_max = (cy + radius).ceil().min(h as f64 - 1.0) as u32;
    let x_min = (cx - radius).floor().max(0.0) as u32;
    let x_max = (cx + radius).ceil().min(w as f64 - 1.0) as u32;
    for y in y_min..=y_max {
        for x in x_min..=x_max {
            if point_in_polygon(x as f64 + 0.0, y as f64 + 0.0, &vx, &vy) {
                canvas.put_pixel(x, y, color);
            }
        }
    }
}

/// Even-odd rule point-in-polygon test.
fn point_in_polygon(px: f64, py: f64, vx: &[f64], vy: &[f64]) -> bool {
    let n = vx.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        if (vy[i] > py) != (vy[j] > py) {
            let x_cross = vx[i] + (py - vy[i]) / (vy[j] - vy[i]) * (vx[j] - vx[i]);
            if px < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CandidatePoint;
    use crate::kps::PromptTriple;

    fn point(index: usize, x: f64, y: f64) -> CandidatePoint {
        CandidatePoint {
            index,
            row: 0,
            col: index,
            x,
            y,
        }
    }

    fn probe(img: &RgbImage, x: f64, y: f64) -> Rgb<u8> {
        *img.get_pixel(x.round() as u32, y.round() as u32)
    }

    #[test]
    fn glyphs_land_on_the_prompt_coordinates() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("overlay.png");
        let image = RgbImage::from_pixel(96, 96, Rgb([40, 40, 40]));
        let selection = PromptSelection {
            triples: vec![PromptTriple {
                pp: point(0, 48.0, 30.0),
                nps: vec![point(1, 20.0, 70.0), point(2, 76.0, 70.0)],
            }],
            k: 1,
        };
        visualize(&image, &selection, &out).unwrap();
        let rendered = image::open(&out).unwrap().to_rgb8();
        assert_eq!(probe(&rendered, 48.0, 30.0), POSITIVE_COLOR);
        assert_eq!(probe(&rendered, 20.0, 70.0), NEGATIVE_COLOR);
        assert_eq!(probe(&rendered, 76.0, 70.0), NEGATIVE_COLOR);
        // Far corner untouched.
        assert_eq!(probe(&rendered, 2.0, 2.0), Rgb([40, 40, 40]));
    }

    #[test]
    fn degenerate_triples_draw_only_the_positive() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("overlay.png");
        let image = RgbImage::from_pixel(64, 64, Rgb([0, 0, 0]));
        let selection = PromptSelection {
            triples: vec![PromptTriple {
                pp: point(0, 32.0, 32.0),
                nps: vec![],
            }],
            k: 1,
        };
        visualize(&image, &selection, &out).unwrap();
        let rendered = image::open(&out).unwrap().to_rgb8();
        assert_eq!(probe(&rendered, 32.0, 32.0), POSITIVE_COLOR);
        let reds = rendered
            .pixels()
            .filter(|p| p.0 == NEGATIVE_COLOR.0)
            .count();
        assert_eq!(reds, 0);
    }

    #[test]
    fn out_of_bounds_prompts_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("overlay.png");
        let image = RgbImage::from_pixel(32, 32, Rgb([0, 0, 0]));
        let selection = PromptSelection {
            triples: vec![PromptTriple {
                pp: point(0, 99.0, 10.0),
                nps: vec![],
            }],
            k: 1,
        };
        assert!(matches!(
            visualize(&image, &selection, &out),
            Err(VizError::OutOfBounds { .. })
        ));
    }
}
