use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::Matrix;

pub const MNIST_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_LABELS: &str = "train-labels-idx1-ubyte";

const IDX3_MAGIC: u32 = 0x0000_0803;
const IDX1_MAGIC: u32 = 0x0000_0801;

/// In-memory classification data: one sample per row of `features`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Dataset(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::Dataset(format!(
                "label {bad} outside 0..{n_classes}"
            )));
        }
        Ok(Self {
            features,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Dataset("truncated IDX header".into()))
}

/// Reads an IDX image/label pair, keeping the first `subset` samples
/// (all when `None`). Pixels are scaled to `[0, 1]`.
pub fn load_mnist_idx(images: &Path, labels: &Path, subset: Option<usize>) -> Result<Dataset> {
    let img = fs::read(images).map_err(|e| Error::Dataset(format!("{}: {e}", images.display())))?;
    let lab = fs::read(labels).map_err(|e| Error::Dataset(format!("{}: {e}", labels.display())))?;

    if read_u32(&img, 0)? != IDX3_MAGIC {
        return Err(Error::Dataset(format!(
            "{}: bad magic number",
            images.display()
        )));
    }
    if read_u32(&lab, 0)? != IDX1_MAGIC {
        return Err(Error::Dataset(format!(
            "{}: bad magic number",
            labels.display()
        )));
    }
    let n_img = read_u32(&img, 4)? as usize;
    let rows = read_u32(&img, 8)? as usize;
    let cols = read_u32(&img, 12)? as usize;
    let n_lab = read_u32(&lab, 4)? as usize;
    if n_img != n_lab {
        return Err(Error::Dataset(format!("{n_img} images but {n_lab} labels")));
    }
    let pixels = rows * cols;
    let n = subset.map_or(n_img, |s| s.min(n_img));
    if img.len() < 16 + n * pixels || lab.len() < 8 + n {
        return Err(Error::Dataset(
            "IDX payload shorter than its header claims".into(),
        ));
    }

    let features = Matrix::from_fn(n, pixels, |i, j| img[16 + i * pixels + j] as f64 / 255.0);
    let labels: Vec<usize> = lab[8..8 + n].iter().map(|&b| b as usize).collect();
    Dataset::new(features, labels, 10)
}

/// Reads the standard training files from `dir`.
pub fn load_mnist(dir: &Path, subset: Option<usize>) -> Result<Dataset> {
    load_mnist_idx(&dir.join(MNIST_IMAGES), &dir.join(MNIST_LABELS), subset)
}

/// Gaussian blobs: class `c` is centred at a random unit-scale mean, with
/// features squashed into `[0, 1]` like image intensities.
pub fn gaussian_blobs<R: Rng + ?Sized>(
    n: usize,
    n_features: usize,
    n_classes: usize,
    spread: f64,
    rng: &mut R,
) -> Result<Dataset> {
    if n == 0 || n_features == 0 || n_classes < 2 {
        return Err(Error::Dataset(
            "blobs need n >= 1, features >= 1, classes >= 2".into(),
        ));
    }
    let centres = Matrix::from_fn(n_classes, n_features, |_, _| {
        rng.sample::<f64, _>(StandardNormal)
    });
    let labels: Vec<usize> = (0..n).map(|i| i % n_classes).collect();
    let mut features = Matrix::zeros(n, n_features);
    for (i, &y) in labels.iter().enumerate() {
        for j in 0..n_features {
            let z: f64 = rng.sample(StandardNormal);
            let x = centres[(y, j)] + spread * z;
            features[(i, j)] = 1.0 / (1.0 + (-x).exp());
        }
    }
    Dataset::new(features, labels, n_classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn write_idx(dir: &Path, n: usize, rows: usize, cols: usize) {
        let mut img = Vec::new();
        img.extend_from_slice(&IDX3_MAGIC.to_be_bytes());
        for v in [n, rows, cols] {
            img.extend_from_slice(&(v as u32).to_be_bytes());
        }
        for i in 0..n * rows * cols {
            img.push((i % 256) as u8);
        }
        let mut lab = Vec::new();
        lab.extend_from_slice(&IDX1_MAGIC.to_be_bytes());
        lab.extend_from_slice(&(n as u32).to_be_bytes());
        for i in 0..n {
            lab.push((i % 10) as u8);
        }
        fs::write(dir.join(MNIST_IMAGES), img).unwrap();
        fs::write(dir.join(MNIST_LABELS), lab).unwrap();
    }

    fn scratch_dir(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("analog-core-{name}-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn reads_idx_subset() {
        let dir = scratch_dir("idx");
        write_idx(&dir, 12, 2, 3);
        let ds = load_mnist(&dir, Some(5)).unwrap();
        assert_eq!(ds.len(), 5);
        assert_eq!(ds.n_features(), 6);
        assert_eq!(ds.labels, vec![0, 1, 2, 3, 4]);
        assert_eq!(ds.features[(1, 0)], 6.0 / 255.0);
        assert!(ds.features.iter().all(|&v| (0.0..=1.0).contains(&v)));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = scratch_dir("magic");
        write_idx(&dir, 2, 1, 1);
        let mut img = fs::read(dir.join(MNIST_IMAGES)).unwrap();
        img[3] = 0x01;
        fs::write(dir.join(MNIST_IMAGES), img).unwrap();
        assert!(matches!(load_mnist(&dir, None), Err(Error::Dataset(_))));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn missing_files_are_dataset_errors() {
        let dir = scratch_dir("missing");
        assert!(matches!(load_mnist(&dir, None), Err(Error::Dataset(_))));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn blobs_are_deterministic() {
        let a = gaussian_blobs(30, 4, 3, 0.5, &mut rng::seeded(1)).unwrap();
        let b = gaussian_blobs(30, 4, 3, 0.5, &mut rng::seeded(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.labels[..4], [0, 1, 2, 0]);
    }
}
