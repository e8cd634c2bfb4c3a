//! The CIFAR-10 binary format: records of 1 label byte followed by 3072 pixel bytes
//! (red plane, green plane, blue plane, each 32x32 row-major).

use super::{Dataset, Split, CHANNELS, IMAGE_LEN, SIDE};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use std::fs;
use std::path::{Path, PathBuf};

pub const RECORD_LEN: usize = 1 + IMAGE_LEN;
pub const RECORDS_PER_FILE: usize = 10_000;
pub const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
pub const TEST_FILE: &str = "test_batch.bin";

#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub seed: u64,
    /// Images held out of the training files for validation.
    pub validation: usize,
    /// `None` requires the standard 10,000 records per file.
    pub records_per_file: Option<usize>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            validation: 10_000,
            records_per_file: Some(RECORDS_PER_FILE),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CifarSplits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Raw labels and pixel bytes of one batch file.
pub fn read_batch(path: &Path, expected_records: Option<usize>) -> Result<(Vec<u8>, Vec<u8>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.is_empty() || bytes.len() % RECORD_LEN != 0 {
        return Err(Error::format(
            Some(path.to_path_buf()),
            format!(
                "{} bytes is not a whole number of {RECORD_LEN}-byte records (truncated?)",
                bytes.len()
            ),
        ));
    }
    let n = bytes.len() / RECORD_LEN;
    if let Some(want) = expected_records {
        if n != want {
            return Err(Error::format(
                Some(path.to_path_buf()),
                format!("expected {want} records, found {n}"),
            ));
        }
    }
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * IMAGE_LEN);
    for rec in bytes.chunks(RECORD_LEN) {
        if rec[0] >= 10 {
            return Err(Error::format(
                Some(path.to_path_buf()),
                format!("label byte {} out of range", rec[0]),
            ));
        }
        labels.push(rec[0]);
        pixels.extend_from_slice(&rec[1..]);
    }
    Ok((labels, pixels))
}

/// Write records in the binary batch layout.
pub fn write_batch(path: &Path, labels: &[u8], pixels: &[u8]) -> Result<()> {
    if pixels.len() != labels.len() * IMAGE_LEN {
        return Err(Error::shape("pixel bytes do not match label count"));
    }
    let mut out = Vec::with_capacity(labels.len() * RECORD_LEN);
    for (l, px) in labels.iter().zip(pixels.chunks(IMAGE_LEN)) {
        out.push(*l);
        out.extend_from_slice(px);
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn resolve_dir(dir: &Path) -> PathBuf {
    let nested = dir.join("cifar-10-batches-bin");
    if !dir.join(TRAIN_FILES[0]).exists() && nested.join(TRAIN_FILES[0]).exists() {
        nested
    } else {
        dir.to_path_buf()
    }
}

fn to_dataset(labels: Vec<u8>, pixels: &[u8], split: Split) -> Result<Dataset> {
    let n = labels.len();
    let data = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    Dataset::new(
        Tensor::new(vec![n, CHANNELS, SIDE, SIDE], data)?,
        labels.into_iter().map(usize::from).collect(),
        split,
    )
}

/// Load the five training files and the test file, splitting a seeded random
/// validation subset off the training images.
pub fn load_cifar10(dir: &Path, opts: &LoadOptions) -> Result<CifarSplits> {
    let dir = resolve_dir(dir);
    let mut labels = Vec::new();
    let mut pixels = Vec::new();
    for name in TRAIN_FILES {
        let (l, p) = read_batch(&dir.join(name), opts.records_per_file)?;
        labels.extend(l);
        pixels.extend(p);
    }
    let (test_labels, test_pixels) = read_batch(&dir.join(TEST_FILE), opts.records_per_file)?;
    let total = labels.len();
    if opts.validation >= total {
        return Err(Error::invalid(format!(
            "validation size {} leaves no training images out of {total}",
            opts.validation
        )));
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut RngStream::new(opts.seed).named("split"));
    let (val_idx, train_idx) = order.split_at(opts.validation);
    let pick = |idx: &[usize]| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        let l: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
        let mut p = Vec::with_capacity(idx.len() * IMAGE_LEN);
        for &i in &idx {
            p.extend_from_slice(&pixels[i * IMAGE_LEN..(i + 1) * IMAGE_LEN]);
        }
        (l, p)
    };
    let (tl, tp) = pick(train_idx);
    let (vl, vp) = pick(val_idx);
    Ok(CifarSplits {
        train: to_dataset(tl, &tp, Split::Train)?,
        validation: to_dataset(vl, &vp, Split::Validation)?,
        test: to_dataset(test_labels, &test_pixels, Split::Test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_archive(dir: &Path, per_file: usize) {
        for (f, name) in TRAIN_FILES.iter().chain([&TEST_FILE]).enumerate() {
            let labels: Vec<u8> = (0..per_file).map(|i| ((i + f) % 10) as u8).collect();
            let pixels: Vec<u8> = (0..per_file * IMAGE_LEN).map(|i| (i * 7 + f) as u8).collect();
            write_batch(&dir.join(name), &labels, &pixels).unwrap();
        }
    }

    #[test]
    fn splits_are_seeded_and_disjoint() {
        let tmp = tempfile::tempdir().unwrap();
        write_archive(tmp.path(), 20);
        let opts = LoadOptions {
            seed: 3,
            validation: 30,
            records_per_file: Some(20),
        };
        let a = load_cifar10(tmp.path(), &opts).unwrap();
        let b = load_cifar10(tmp.path(), &opts).unwrap();
        assert_eq!(a.train.len(), 70);
        assert_eq!(a.validation.len(), 30);
        assert_eq!(a.test.len(), 20);
        assert_eq!(a.train.images, b.train.images);
        assert_eq!(a.validation.labels, b.validation.labels);
        assert!(a.train.images.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn strict_count_and_truncation_name_the_file() {
        let tmp = tempfile::tempdir().unwrap();
        write_archive(tmp.path(), 5);
        let err = load_cifar10(tmp.path(), &LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("data_batch_1.bin"), "{err}");
        let p = tmp.path().join("data_batch_3.bin");
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 10]).unwrap();
        let relaxed = LoadOptions {
            records_per_file: None,
            validation: 5,
            ..LoadOptions::default()
        };
        let err = load_cifar10(tmp.path(), &relaxed).unwrap_err();
        assert!(err.to_string().contains("data_batch_3.bin"), "{err}");
        fs::remove_file(tmp.path().join(TEST_FILE)).unwrap();
        fs::write(&p, &bytes).unwrap();
        let err = load_cifar10(tmp.path(), &relaxed).unwrap_err();
        assert!(err.to_string().contains("test_batch.bin"), "{err}");
    }
}
