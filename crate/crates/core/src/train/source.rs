//! Per-epoch training data: labelled images augmented on the fly, or pre-generated
//! transfer-set records.

use crate::data::{augment_image, normalize_per_image, AugmentConfig, Dataset, TransferFile, IMAGE_LEN};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::NUM_CLASSES;
use rand::seq::SliceRandom;

/// Regression or classification targets for one epoch.
#[derive(Clone, Debug)]
pub enum Targets {
    Labels(Vec<usize>),
    /// Row-major `(n, 10)` logits.
    Logits(Vec<f32>),
}

/// One epoch of normalized inputs plus the order to visit them in.
pub struct EpochData {
    pub images: Vec<f32>,
    /// Shape of one example, e.g. `[3, 32, 32]`.
    pub sample_shape: Vec<usize>,
    pub targets: Targets,
    pub order: Vec<usize>,
}

impl EpochData {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

pub trait TrainSource {
    /// Examples per epoch.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Materialize epoch `epoch` (0-based).
    fn epoch(&mut self, epoch: usize) -> Result<EpochData>;
}

/// Labelled images, augmented per epoch and visited in a seeded shuffled order.
pub struct LabeledSource<'a> {
    pub data: &'a Dataset,
    pub augment: AugmentConfig,
    pub seed: u64,
    pub shuffle: bool,
}

impl<'a> LabeledSource<'a> {
    pub fn new(data: &'a Dataset, augment: AugmentConfig, seed: u64) -> Self {
        Self {
            data,
            augment,
            seed,
            shuffle: true,
        }
    }
}

impl TrainSource for LabeledSource<'_> {
    fn len(&self) -> usize {
        self.data.len()
    }

    fn epoch(&mut self, epoch: usize) -> Result<EpochData> {
        self.augment.validate()?;
        let n = self.data.len();
        let root = RngStream::new(self.seed).named("augment").split(epoch as u64);
        let identity = self.augment == AugmentConfig::identity();
        let mut images = Vec::with_capacity(n * IMAGE_LEN);
        for i in 0..n {
            let start = images.len();
            if identity {
                images.extend_from_slice(self.data.image(i));
            } else {
                images.extend(augment_image(
                    self.data.image(i),
                    &self.augment,
                    &mut root.split(i as u64),
                ));
            }
            normalize_per_image(&mut images[start..]);
        }
        let mut order: Vec<usize> = (0..n).collect();
        if self.shuffle {
            order.shuffle(&mut RngStream::new(self.seed).named("order").split(epoch as u64));
        }
        Ok(EpochData {
            images,
            sample_shape: vec![3, 32, 32],
            targets: Targets::Labels(self.data.labels.clone()),
            order,
        })
    }
}

/// Transfer-set records. Epoch `e` reads the block of records for transfer epoch
/// `e mod epochs`, visited in file order unless a shuffle seed is set. With `labels` set, the stored logits are replaced
/// by the source image labels (the hard-target twin of a mimic run).
pub struct TransferSource {
    file: TransferFile,
    per_epoch: usize,
    labels: Option<Vec<usize>>,
    shuffle: Option<u64>,
}

impl TransferSource {
    pub fn soft(file: TransferFile) -> Result<Self> {
        Self::build(file, None)
    }

    /// `labels[i]` is the label of training image `i`.
    pub fn hard(file: TransferFile, labels: Vec<usize>) -> Result<Self> {
        Self::build(file, Some(labels))
    }

    fn build(file: TransferFile, labels: Option<Vec<usize>>) -> Result<Self> {
        let h = file.header();
        if h.epochs == 0 || !h.count.is_multiple_of(h.epochs as u64) {
            return Err(Error::format(
                Some(file.path().to_path_buf()),
                "record count is not a whole number of epochs",
            ));
        }
        let per_epoch = h.source_len() as usize;
        if let Some(l) = &labels {
            if l.len() != per_epoch {
                return Err(Error::shape(format!(
                    "transfer set covers {per_epoch} images, {} labels given",
                    l.len()
                )));
            }
        }
        Ok(Self {
            file,
            per_epoch,
            labels,
            shuffle: None,
        })
    }

    /// Visit each epoch in an order drawn from `seed`.
    pub fn shuffled(mut self, seed: u64) -> Self {
        self.shuffle = Some(seed);
        self
    }

    pub fn file(&self) -> &TransferFile {
        &self.file
    }
}

impl TrainSource for TransferSource {
    fn len(&self) -> usize {
        self.per_epoch
    }

    fn epoch(&mut self, epoch: usize) -> Result<EpochData> {
        let block = (epoch % self.file.header().epochs as usize) as u64;
        let (mut images, logits) = self.file.read_range(block * self.per_epoch as u64, self.per_epoch)?;
        for img in images.chunks_mut(IMAGE_LEN) {
            normalize_per_image(img);
        }
        debug_assert_eq!(logits.len(), self.per_epoch * NUM_CLASSES);
        let targets = match &self.labels {
            Some(l) => Targets::Labels(l.clone()),
            None => Targets::Logits(logits),
        };
        let mut order: Vec<usize> = (0..self.per_epoch).collect();
        if let Some(seed) = self.shuffle {
            order.shuffle(&mut RngStream::new(seed).named("order").split(epoch as u64));
        }
        Ok(EpochData {
            images,
            sample_shape: vec![3, 32, 32],
            targets,
            order,
        })
    }
}

/// Fixed in-memory examples, already normalized; mainly for tests.
pub struct MemorySource {
    pub images: Vec<f32>,
    pub sample_shape: Vec<usize>,
    pub targets: Targets,
    pub shuffle_seed: Option<u64>,
}

impl TrainSource for MemorySource {
    fn len(&self) -> usize {
        self.images.len() / self.sample_shape.iter().product::<usize>()
    }

    fn epoch(&mut self, epoch: usize) -> Result<EpochData> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        if let Some(seed) = self.shuffle_seed {
            order.shuffle(&mut RngStream::new(seed).split(epoch as u64));
        }
        Ok(EpochData {
            images: self.images.clone(),
            sample_shape: self.sample_shape.clone(),
            targets: self.targets.clone(),
            order,
        })
    }
}
