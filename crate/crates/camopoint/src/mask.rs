//! Per-pixel segmentation masks, shared by ground truth and predictions.

use std::path::Path;

use image::{GrayImage, ImageReader, Luma};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("mask is empty ({width}x{height})")]
    Empty { width: u32, height: u32 },
    #[error("mask buffer holds {got} values, expected {expected} for {width}x{height}")]
    LengthMismatch {
        width: u32,
        height: u32,
        got: usize,
        expected: usize,
    },
    #[error("mask value {value} at index {index} is outside [0, 1]")]
    ValueRange { index: usize, value: f64 },
    #[error("mask dimensions {got_w}x{got_h} do not match expected {want_w}x{want_h}")]
    DimMismatch {
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
    #[error("failed to read mask image {path}: {source}")]
    Read {
        path: String,
        source: image::ImageError,
    },
    #[error("failed to write mask image {path}: {source}")]
    Write {
        path: String,
        source: image::ImageError,
    },
}

/// A width×height grid of foreground probabilities in `[0, 1]`, row-major.
///
/// Binary masks use exactly `{0.0, 1.0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMask {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl SegmentationMask {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::Empty { width, height });
        }
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(MaskError::LengthMismatch {
                width,
                height,
                got: values.len(),
                expected,
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(MaskError::ValueRange { index, value });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width as usize * height as usize],
        }
    }

    /// Builds a mask from a per-pixel function of `(x, y)`.
    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> f64) -> Self {
        let mut values = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Self {
            width,
            height,
            values,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: f64) {
        self.values[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// True when a pixel counts as foreground (binary masks store 0/1, loaded
    /// ground truth is thresholded at 0.5).
    #[inline]
    pub fn is_foreground(&self, x: u32, y: u32) -> bool {
        self.get(x, y) > 0.5
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Thresholds to an exact 0/1 mask (`value >= threshold` is foreground).
    pub fn binarize(&self, threshold: f64) -> SegmentationMask {
        SegmentationMask {
            width: self.width,
            height: self.height,
            values: self
                .values
                .iter()
                .map(|&v| if v >= threshold { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn same_dims(&self, other: &SegmentationMask) -> Result<(), MaskError> {
        if self.width != other.width || self.height != other.height {
            return Err(MaskError::DimMismatch {
                got_w: other.width,
                got_h: other.height,
                want_w: self.width,
                want_h: self.height,
            });
        }
        Ok(())
    }

    /// Nearest-neighbor resampling; keeps binary masks binary.
    pub fn resize_nearest(&self, width: u32, height: u32) -> SegmentationMask {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        SegmentationMask::from_fn(width, height, |x, y| {
            let src_x = (((x as f64 + 0.5) * sx - 0.5).round().max(0.0) as u32).min(self.width - 1);
            let src_y =
                (((y as f64 + 0.5) * sy - 0.5).round().max(0.0) as u32).min(self.height - 1);
            self.get(src_x, src_y)
        })
    }

    /// Loads a grayscale image as a mask, scaling 8-bit values to `[0, 1]`.
    pub fn load_png(path: &Path) -> Result<Self, MaskError> {
        let img = ImageReader::open(path)
            .map_err(|e| MaskError::Read {
                path: path.display().to_string(),
                source: image::ImageError::IoError(e),
            })?
            .decode()
            .map_err(|e| MaskError::Read {
                path: path.display().to_string(),
                source: e,
            })?
            .to_luma8();
        let (width, height) = img.dimensions();
        let values = img.pixels().map(|p| p.0[0] as f64 / 255.0).collect();
        SegmentationMask::new(width, height, values)
    }

    /// Writes the mask as an 8-bit grayscale PNG.
    pub fn save_png(&self, path: &Path) -> Result<(), MaskError> {
        let mut img = GrayImage::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let v = (self.get(x, y) * 255.0).round().clamp(0.0, 255.0) as u8;
                img.put_pixel(x, y, Luma([v]));
            }
        }
        img.save(path).map_err(|e| MaskError::Write {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_buffers() {
        assert!(matches!(
            SegmentationMask::new(0, 4, vec![]),
            Err(MaskError::Empty { .. })
        ));
        assert!(matches!(
            SegmentationMask::new(2, 2, vec![0.0; 3]),
            Err(MaskError::LengthMismatch { .. })
        ));
        assert!(matches!(
            SegmentationMask::new(2, 1, vec![0.0, 1.5]),
            Err(MaskError::ValueRange { index: 1, .. })
        ));
    }

    #[test]
    fn png_round_trip_preserves_binary_masks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mask = SegmentationMask::from_fn(7, 5, |x, y| if (x + y) % 2 == 0 { 1.0 } else { 0.0 });
        mask.save_png(&path).unwrap();
        let back = SegmentationMask::load_png(&path).unwrap();
        assert_eq!(mask, back);
    }

    #[test]
    fn nearest_resize_keeps_binarity() {
        let mask = SegmentationMask::from_fn(8, 8, |x, _| if x < 4 { 1.0 } else { 0.0 });
        let up = mask.resize_nearest(17, 13);
        assert!(up.is_binary());
        let down = up.resize_nearest(8, 8);
        assert_eq!(down, mask);
    }
}
