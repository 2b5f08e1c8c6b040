//! Dataset ingestion for the standard image/mask directory layouts.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::SegmentationMask;
use crate::nn::Tensor;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset root {0} does not exist")]
    MissingRoot(PathBuf),
    #[error("expected subdirectory {0}")]
    MissingSubdir(PathBuf),
    #[error("image {0} has no ground-truth mask")]
    MissingMask(PathBuf),
    #[error("image {image} is {iw}x{ih} but its mask {mask} is {mw}x{mh}")]
    DimMismatch {
        image: PathBuf,
        mask: PathBuf,
        iw: u32,
        ih: u32,
        mw: u32,
        mh: u32,
    },
    #[error("duplicate image id '{0}'")]
    DuplicateId(String),
    #[error("dataset at {0} contains no images")]
    Empty(PathBuf),
    #[error("unknown dataset name '{0}' (known: COD10K, NC4K, CAMO, synthetic)")]
    UnknownName(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to decode {path}: {source}")]
    Decode {
        path: PathBuf,
        source: image::ImageError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetName {
    Cod10k,
    Nc4k,
    Camo,
    Synthetic,
}

impl FromStr for DatasetName {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cod10k" => Ok(Self::Cod10k),
            "nc4k" => Ok(Self::Nc4k),
            "camo" => Ok(Self::Camo),
            "synthetic" => Ok(Self::Synthetic),
            other => Err(DatasetError::UnknownName(other.to_string())),
        }
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Cod10k => "COD10K",
            Self::Nc4k => "NC4K",
            Self::Camo => "CAMO",
            Self::Synthetic => "synthetic",
        };
        f.write_str(s)
    }
}

/// Subdirectory names of the image/mask trees.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetLayout {
    pub image_dir: String,
    pub gt_dir: String,
}

impl Default for DatasetLayout {
    fn default() -> Self {
        Self {
            image_dir: "Image".to_string(),
            gt_dir: "GT".to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetEntry {
    pub id: String,
    pub image_path: PathBuf,
    pub gt_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct DatasetIndex {
    pub name: DatasetName,
    pub root: PathBuf,
    pub entries: Vec<DatasetEntry>,
}

impl DatasetIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

const IMAGE_EXTS: &[&str] = &["png", "jpg", "jpeg", "bmp"];

/// Validates and indexes a dataset rooted at `root`: every image must have a
/// same-stem mask in the ground-truth tree with matching dimensions, and ids
/// must be unique. Pixel data itself is loaded lazily.
pub fn ingest(
    root: &Path,
    name: DatasetName,
    layout: &DatasetLayout,
) -> Result<DatasetIndex, DatasetError> {
    if !root.is_dir() {
        return Err(DatasetError::MissingRoot(root.to_path_buf()));
    }
    let image_dir = root.join(&layout.image_dir);
    let gt_dir = root.join(&layout.gt_dir);
    for dir in [&image_dir, &gt_dir] {
        if !dir.is_dir() {
            return Err(DatasetError::MissingSubdir(dir.clone()));
        }
    }

    let mut files: Vec<PathBuf> = std::fs::read_dir(&image_dir)
        .map_err(|source| DatasetError::Io {
            path: image_dir.clone(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| IMAGE_EXTS.contains(&e.to_ascii_lowercase().as_str()))
                .unwrap_or(false)
        })
        .collect();
    files.sort();

    let mut seen = BTreeSet::new();
    let mut entries = Vec::with_capacity(files.len());
    for image_path in files {
        let id = image_path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        if !seen.insert(id.clone()) {
            return Err(DatasetError::DuplicateId(id));
        }
        let gt_path = IMAGE_EXTS
            .iter()
            .map(|ext| gt_dir.join(format!("{id}.{ext}")))
            .find(|p| p.is_file())
            .ok_or_else(|| DatasetError::MissingMask(image_path.clone()))?;

        let (iw, ih) = image::image_dimensions(&image_path).map_err(|source| {
            DatasetError::Decode {
                path: image_path.clone(),
                source,
            }
        })?;
        let (mw, mh) = image::image_dimensions(&gt_path).map_err(|source| {
            DatasetError::Decode {
                path: gt_path.clone(),
                source,
            }
        })?;
        if (iw, ih) != (mw, mh) {
            return Err(DatasetError::DimMismatch {
                image: image_path,
                mask: gt_path,
                iw,
                ih,
                mw,
                mh,
            });
        }
        entries.push(DatasetEntry {
            id,
            image_path,
            gt_path,
        });
    }
    if entries.is_empty() {
        return Err(DatasetError::Empty(root.to_path_buf()));
    }
    Ok(DatasetIndex {
        name,
        root: root.to_path_buf(),
        entries,
    })
}

/// Loads an RGB image as a `[3, size, size]` tensor in `[0, 1]`, resampling
/// bilinearly to the working resolution.
pub fn load_image(path: &Path, size: u32) -> Result<Tensor, DatasetError> {
    let img = image::open(path)
        .map_err(|source| DatasetError::Decode {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    let img = if img.dimensions() == (size, size) {
        img
    } else {
        image::imageops::resize(&img, size, size, image::imageops::FilterType::Triangle)
    };
    let hw = (size * size) as usize;
    let mut data = vec![0.0f64; 3 * hw];
    for (i, px) in img.pixels().enumerate() {
        data[i] = px.0[0] as f64 / 255.0;
        data[hw + i] = px.0[1] as f64 / 255.0;
        data[2 * hw + i] = px.0[2] as f64 / 255.0;
    }
    Ok(Tensor::from_vec(&[3, size as usize, size as usize], data))
}

/// Loads a ground-truth mask, binarizes it at 0.5, and nearest-resamples it
/// to the working resolution (binarity is preserved).
pub fn load_gt(path: &Path, size: u32) -> Result<SegmentationMask, DatasetError> {
    let mask = SegmentationMask::load_png(path).map_err(|e| DatasetError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })?;
    let binary = mask.binarize(0.5);
    Ok(binary.resize_nearest(size, size))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixture;

    #[test]
    fn ingests_the_synthetic_fixture() {
        let dir = tempfile::tempdir().unwrap();
        fixture::generate(dir.path(), 8, 64, 7).unwrap();
        let index = ingest(dir.path(), DatasetName::Synthetic, &DatasetLayout::default()).unwrap();
        assert_eq!(index.len(), 8);
        for e in &index.entries {
            assert!(e.image_path.is_file());
            assert!(e.gt_path.is_file());
        }
        // Ids are sorted and unique.
        let ids: Vec<&str> = index.entries.iter().map(|e| e.id.as_str()).collect();
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn missing_mask_is_reported_with_the_path() {
        let dir = tempfile::tempdir().unwrap();
        fixture::generate(dir.path(), 2, 32, 1).unwrap();
        // Drop one mask.
        let victim = dir.path().join("GT").join("synthetic_0000.png");
        std::fs::remove_file(&victim).unwrap();
        let err = ingest(dir.path(), DatasetName::Synthetic, &DatasetLayout::default()).unwrap_err();
        match err {
            DatasetError::MissingMask(path) => {
                assert!(path.to_string_lossy().contains("synthetic_0000"))
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("Image")).unwrap();
        std::fs::create_dir_all(dir.path().join("GT")).unwrap();
        assert!(matches!(
            ingest(dir.path(), DatasetName::Synthetic, &DatasetLayout::default()),
            Err(DatasetError::Empty(_))
        ));
    }

    #[test]
    fn dataset_names_parse() {
        assert_eq!("COD10K".parse::<DatasetName>().unwrap(), DatasetName::Cod10k);
        assert_eq!("nc4k".parse::<DatasetName>().unwrap(), DatasetName::Nc4k);
        assert!("imagenet".parse::<DatasetName>().is_err());
    }
}
