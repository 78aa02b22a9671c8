//! Datasets for the toy classification task: a built-in 10-class synthetic
//! shape generator plus an ingestion path for folder-per-class image
//! corpora.

use std::path::Path;

use crate::degrade::ImagePlane;
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::{Shape, Tensor};

/// Labeled image collection. Images hold values in `[0, 255]`.
pub struct Dataset {
    pub images: Vec<ImagePlane>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Stack the selected images into a `(n, c, h, w)` tensor scaled to
    /// `[0, 1]`, plus the matching labels.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Vec<usize>)> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let first = &self.images[indices[0]];
        let (c, h, w) = (first.channels(), first.height(), first.width());
        let mut data = Vec::with_capacity(indices.len() * c * h * w);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let img = &self.images[i];
            if (img.channels(), img.height(), img.width()) != (c, h, w) {
                return Err(Error::ShapeMismatch(format!(
                    "image {i} has different dimensions than the batch"
                )));
            }
            data.extend(img.data().iter().map(|&v| v / 255.0));
            labels.push(self.labels[i]);
        }
        let t = Tensor::from_vec(Shape::new(indices.len(), c, h, w), data)?;
        Ok((t, labels))
    }

    /// Batch where each selected image is replaced by `f(index, image)`,
    /// used to run a degradation per test image.
    pub fn batch_with<F>(&self, indices: &[usize], f: F) -> Result<(Tensor, Vec<usize>)>
    where
        F: Fn(usize, &ImagePlane) -> Result<ImagePlane> + Sync,
    {
        use rayon::prelude::*;
        let processed: Vec<Result<ImagePlane>> = indices
            .par_iter()
            .map(|&i| f(i, &self.images[i]))
            .collect();
        let mut images = Vec::with_capacity(indices.len());
        for img in processed {
            images.push(img?);
        }
        let first = &images[0];
        let (c, h, w) = (first.channels(), first.height(), first.width());
        let mut data = Vec::with_capacity(indices.len() * c * h * w);
        for img in &images {
            data.extend(img.data().iter().map(|&v| v / 255.0));
        }
        let t = Tensor::from_vec(Shape::new(indices.len(), c, h, w), data)?;
        Ok((t, indices.iter().map(|&i| self.labels[i]).collect()))
    }
}

pub const SYNTHETIC_CLASSES: [&str; 10] = [
    "disk",
    "ring",
    "square",
    "frame",
    "plus",
    "cross",
    "hstripes",
    "vstripes",
    "triangle",
    "twodots",
];

/// Generate `count` synthetic 32x32 images, labels round-robin over the ten
/// shape classes. Every image is a pure function of `(seed, index)`.
pub fn synthetic(count: usize, seed: u64, rgb: bool) -> Dataset {
    let images: Vec<ImagePlane> = (0..count).map(|i| synthetic_image(seed, i, rgb)).collect();
    let labels = (0..count).map(|i| i % 10).collect();
    Dataset {
        images,
        labels,
        classes: 10,
        class_names: SYNTHETIC_CLASSES.iter().map(|s| s.to_string()).collect(),
    }
}

/// One synthetic sample: a shape of class `index % 10` with randomized
/// position, scale, contrast and smooth shading.
pub fn synthetic_image(seed: u64, index: usize, rgb: bool) -> ImagePlane {
    let mut rng = RngStream::for_item(seed, index as u64);
    let class = index % 10;
    let (h, w) = (32usize, 32usize);

    let bg = rng.uniform(40.0, 80.0) as f32;
    let fg = rng.uniform(150.0, 220.0) as f32;
    let cy = 16.0 + rng.uniform(-3.0, 3.0);
    let cx = 16.0 + rng.uniform(-3.0, 3.0);
    let scale = rng.uniform(0.85, 1.15);
    // Smooth multiplicative shading so intensity alone cannot identify the
    // class.
    let (sa, sb, phase) = (
        rng.uniform(0.05, 0.2),
        rng.uniform(0.05, 0.2),
        rng.uniform(0.0, std::f64::consts::TAU),
    );
    let stripe_offset = rng.uniform(0.0, 8.0);

    let mut gray = ImagePlane::new(1, h, w).expect("1 channel is valid");
    for y in 0..h {
        for x in 0..w {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let inside = match class {
                // disk
                0 => (dx * dx + dy * dy).sqrt() <= 9.0 * scale,
                // ring
                1 => {
                    let r = (dx * dx + dy * dy).sqrt();
                    r <= 11.0 * scale && r > (11.0 * scale - 3.5)
                }
                // filled square
                2 => dx.abs().max(dy.abs()) <= 8.0 * scale,
                // square frame
                3 => {
                    let m = dx.abs().max(dy.abs());
                    m <= 10.0 * scale && m > 10.0 * scale - 3.5
                }
                // plus
                4 => {
                    let arm = 10.0 * scale;
                    (dx.abs() <= 2.5 && dy.abs() <= arm)
                        || (dy.abs() <= 2.5 && dx.abs() <= arm)
                }
                // diagonal cross
                5 => {
                    let arm = 10.0 * scale;
                    let d1 = (dx - dy).abs() / std::f64::consts::SQRT_2;
                    let d2 = (dx + dy).abs() / std::f64::consts::SQRT_2;
                    (d1 <= 2.5 || d2 <= 2.5) && dx.abs() <= arm && dy.abs() <= arm
                }
                // horizontal stripes, period 8
                6 => ((y as f64 + stripe_offset) / 4.0) as usize % 2 == 0,
                // vertical stripes, period 8
                7 => ((x as f64 + stripe_offset) / 4.0) as usize % 2 == 0,
                // upward triangle
                8 => {
                    let half = 11.0 * scale;
                    dy >= -half && dy <= half * 0.8 && dx.abs() <= (dy + half) * 0.55
                }
                // two small disks
                _ => {
                    let off = 6.5 * scale;
                    let r = 4.0 * scale;
                    let left = ((dx + off).powi(2) + dy * dy).sqrt() <= r;
                    let right = ((dx - off).powi(2) + dy * dy).sqrt() <= r;
                    left || right
                }
            };
            let base = if inside { fg } else { bg };
            let shade = 1.0
                + 0.12
                    * (sa * y as f64 + sb * x as f64 + phase).sin();
            gray.set(0, y, x, (base as f64 * shade).clamp(0.0, 255.0) as f32);
        }
    }

    if !rgb {
        return gray;
    }
    // RGB variant: a mild per-channel gain over the same shape.
    let gains = [
        rng.uniform(0.8, 1.0),
        rng.uniform(0.8, 1.0),
        rng.uniform(0.8, 1.0),
    ];
    let mut img = ImagePlane::new(3, h, w).expect("3 channels is valid");
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                img.set(c, y, x, (gray.get(0, y, x) as f64 * gains[c]).clamp(0.0, 255.0) as f32);
            }
        }
    }
    img
}

/// Load a folder-per-class corpus: each subdirectory of `root` is one class
/// (sorted by name), every `.png`/`.pgm`/`.ppm` file inside is one sample.
pub fn load_dir(root: impl AsRef<Path>) -> Result<Dataset> {
    let root = root.as_ref();
    let mut class_dirs: Vec<std::path::PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} contains no class directories",
            root.display()
        )));
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut class_names = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        class_names.push(
            dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        );
        let mut files: Vec<std::path::PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm" | "ppm"))
                    .unwrap_or(false)
            })
            .collect();
        files.sort();
        for f in files {
            images.push(crate::imgio::image_read(&f)?);
            labels.push(label);
        }
    }
    if images.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} contains no readable images",
            root.display()
        )));
    }
    let classes = class_names.len();
    Ok(Dataset { images, labels, classes, class_names })
}
