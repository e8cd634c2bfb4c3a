//! CIFAR-10 ingestion, per-image normalization, augmentation and transfer sets.

pub mod augment;
pub mod cifar;
mod spline;
pub mod synth;
pub mod transfer;

pub use augment::{augment_image, crop_scale_jitter, hsv_jitter, mirror, AugmentConfig};
pub use cifar::{load_cifar10, read_batch, write_batch, CifarSplits, LoadOptions};
pub use spline::resize_square;
pub use transfer::{generate_transfer_set, TransferFile, TransferHeader, TransferWriter, TRANSFER_MAGIC};

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

pub const CHANNELS: usize = 3;
pub const SIDE: usize = 32;
pub const IMAGE_LEN: usize = CHANNELS * SIDE * SIDE;
pub const NORMALIZE_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Images in `[0,1]` laid out `(N, 3, 32, 32)`, with class labels.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    pub split: Split,
}

impl Dataset {
    pub fn new(images: Tensor<f32>, labels: Vec<usize>, split: Split) -> Result<Self> {
        let (n, c, h, w) = images.dims4()?;
        if (c, h, w) != (CHANNELS, SIDE, SIDE) {
            return Err(Error::shape(format!("expected 3x32x32 images, got {c}x{h}x{w}")));
        }
        if labels.len() != n {
            return Err(Error::shape(format!("{n} images but {} labels", labels.len())));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= 10) {
            return Err(Error::invalid(format!("label {l} out of range")));
        }
        Ok(Self { images, labels, split })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        &self.images.data()[i * IMAGE_LEN..(i + 1) * IMAGE_LEN]
    }

    /// Copy of the selected examples, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut data = Vec::with_capacity(indices.len() * IMAGE_LEN);
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Dataset::new(
            Tensor::new(vec![indices.len(), CHANNELS, SIDE, SIDE], data)?,
            labels,
            self.split,
        )
    }

    pub fn take(&self, n: usize) -> Result<Dataset> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Normalized model input for the selected examples.
    pub fn normalized_batch(&self, indices: &[usize]) -> Tensor<f32> {
        let mut data = Vec::with_capacity(indices.len() * IMAGE_LEN);
        for &i in indices {
            let start = data.len();
            data.extend_from_slice(self.image(i));
            normalize_per_image(&mut data[start..]);
        }
        Tensor::new(vec![indices.len(), CHANNELS, SIDE, SIDE], data).expect("batch shape")
    }
}

/// Subtract the image mean and divide by its population standard deviation (plus a
/// small epsilon, so constant images map to zeros).
pub fn normalize_per_image(image: &mut [f32]) {
    let n = image.len() as f64;
    let mean = image.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = image.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + NORMALIZE_EPS;
    for v in image.iter_mut() {
        *v = ((*v as f64 - mean) / denom) as f32;
    }
}

/// Normalize every image of an `(N, 3, 32, 32)` tensor.
pub fn normalize_batch(images: &mut Tensor<f32>) {
    for img in images.data_mut().chunks_mut(IMAGE_LEN) {
        normalize_per_image(img);
    }
}
