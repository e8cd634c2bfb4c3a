//! Pre-generated transfer sets: augmented training images paired with ensemble logits.
//!
//! ```text
//! "MBTS" | u32 version | u64 record count | augment config (56 bytes)
//!        | 32-byte ensemble fingerprint | u32 epochs
//! record: 3072 f32 pixels (pre-normalization) | 10 f32 logits
//! u64 checksum: first 8 bytes of SHA-256 over everything before it
//! ```
//!
//! Record `k` holds training image `k mod N` for epoch `k / N`.

use super::{augment_image, normalize_per_image, AugmentConfig, Dataset, CHANNELS, IMAGE_LEN, SIDE};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::{Tensor, NUM_CLASSES};
use sha2::{Digest, Sha256};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

pub const TRANSFER_MAGIC: &[u8; 4] = b"MBTS";
const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 8 + AugmentConfig::ENCODED_LEN + 32 + 4;
pub const RECORD_LEN: usize = (IMAGE_LEN + NUM_CLASSES) * 4;

#[derive(Clone, Debug, PartialEq)]
pub struct TransferHeader {
    pub count: u64,
    pub config: AugmentConfig,
    pub fingerprint: [u8; 32],
    pub epochs: u32,
}

impl TransferHeader {
    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN);
        out.extend_from_slice(TRANSFER_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.count.to_le_bytes());
        out.extend_from_slice(&self.config.to_bytes());
        out.extend_from_slice(&self.fingerprint);
        out.extend_from_slice(&self.epochs.to_le_bytes());
        out
    }

    fn from_bytes(b: &[u8], path: &Path) -> Result<Self> {
        let bad = |m: &str| Error::format(Some(path.to_path_buf()), m.to_string());
        if b.len() < HEADER_LEN {
            return Err(bad("file too short for a transfer-set header"));
        }
        if &b[..4] != TRANSFER_MAGIC {
            return Err(bad("not a transfer set (bad magic)"));
        }
        let version = u32::from_le_bytes(b[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(bad(&format!("unsupported transfer-set version {version}")));
        }
        let count = u64::from_le_bytes(b[8..16].try_into().expect("8 bytes"));
        let cfg_end = 16 + AugmentConfig::ENCODED_LEN;
        let config = AugmentConfig::from_bytes(&b[16..cfg_end])?;
        let mut fingerprint = [0u8; 32];
        fingerprint.copy_from_slice(&b[cfg_end..cfg_end + 32]);
        let epochs = u32::from_le_bytes(b[cfg_end + 32..cfg_end + 36].try_into().expect("4 bytes"));
        Ok(Self {
            count,
            config,
            fingerprint,
            epochs,
        })
    }

    /// Training-split size implied by the header.
    pub fn source_len(&self) -> u64 {
        if self.epochs == 0 {
            0
        } else {
            self.count / self.epochs as u64
        }
    }
}

fn checksum(h: Sha256) -> u64 {
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn tmp_path(dest: &Path) -> PathBuf {
    let mut name = dest.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    dest.with_file_name(name)
}

/// Streams records to `<path>.partial` and renames on [`finish`](Self::finish); a
/// writer dropped early removes its partial file.
pub struct TransferWriter {
    dest: PathBuf,
    tmp: PathBuf,
    out: Option<BufWriter<File>>,
    hasher: Sha256,
    expected: u64,
    written: u64,
}

impl TransferWriter {
    pub fn create(path: &Path, header: &TransferHeader) -> Result<Self> {
        let tmp = tmp_path(path);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        let mut w = Self {
            dest: path.to_path_buf(),
            tmp,
            out: Some(BufWriter::with_capacity(1 << 20, file)),
            hasher: Sha256::new(),
            expected: header.count,
            written: 0,
        };
        w.write_raw(&header.to_bytes())?;
        Ok(w)
    }

    fn write_raw(&mut self, bytes: &[u8]) -> Result<()> {
        self.hasher.update(bytes);
        let out = self.out.as_mut().expect("writer open");
        out.write_all(bytes).map_err(|e| Error::io(&self.tmp, e))
    }

    pub fn push(&mut self, image: &[f32], logits: &[f32]) -> Result<()> {
        if image.len() != IMAGE_LEN || logits.len() != NUM_CLASSES {
            return Err(Error::shape("transfer record needs 3072 pixels and 10 logits"));
        }
        if self.written == self.expected {
            return Err(Error::invalid("more records than the header declares"));
        }
        let mut buf = Vec::with_capacity(RECORD_LEN);
        for v in image.iter().chain(logits) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        self.write_raw(&buf)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if self.written != self.expected {
            return Err(Error::invalid(format!(
                "header declares {} records, {} written",
                self.expected, self.written
            )));
        }
        let sum = checksum(std::mem::take(&mut self.hasher));
        let mut out = self.out.take().expect("writer open");
        let tmp = self.tmp.clone();
        out.write_all(&sum.to_le_bytes()).map_err(|e| Error::io(&tmp, e))?;
        let file = out.into_inner().map_err(|e| Error::io(&tmp, e.into_error()))?;
        file.sync_all().map_err(|e| Error::io(&tmp, e))?;
        drop(file);
        fs::rename(&tmp, &self.dest).map_err(|e| Error::io(&self.dest, e))
    }
}

impl Drop for TransferWriter {
    fn drop(&mut self) {
        if self.out.take().is_some() {
            let _ = fs::remove_file(&self.tmp);
        }
    }
}

/// A verified transfer set on disk, read in record ranges.
pub struct TransferFile {
    path: PathBuf,
    header: TransferHeader,
    file: File,
}

impl TransferFile {
    /// Open and verify length and checksum.
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        let mut reader = BufReader::with_capacity(1 << 20, file);
        let mut head = vec![0u8; HEADER_LEN];
        reader
            .read_exact(&mut head)
            .map_err(|_| Error::format(Some(path.to_path_buf()), "file too short for a transfer-set header"))?;
        let header = TransferHeader::from_bytes(&head, path)?;
        let want = HEADER_LEN as u64 + header.count * RECORD_LEN as u64 + 8;
        if len != want {
            return Err(Error::format(
                Some(path.to_path_buf()),
                format!("{len} bytes on disk, header implies {want} (truncated or incomplete)"),
            ));
        }
        let mut hasher = Sha256::new();
        hasher.update(&head);
        let mut remaining = len - HEADER_LEN as u64 - 8;
        let mut buf = vec![0u8; 1 << 20];
        while remaining > 0 {
            let n = remaining.min(buf.len() as u64) as usize;
            reader.read_exact(&mut buf[..n]).map_err(|e| Error::io(path, e))?;
            hasher.update(&buf[..n]);
            remaining -= n as u64;
        }
        let mut tail = [0u8; 8];
        reader.read_exact(&mut tail).map_err(|e| Error::io(path, e))?;
        if u64::from_le_bytes(tail) != checksum(hasher) {
            return Err(Error::format(
                Some(path.to_path_buf()),
                "transfer-set checksum mismatch",
            ));
        }
        let file = reader.into_inner();
        Ok(Self {
            path: path.to_path_buf(),
            header,
            file,
        })
    }

    pub fn header(&self) -> &TransferHeader {
        &self.header
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Pixels `(n * 3072)` and logits `(n * 10)` of records `start..start + n`.
    pub fn read_range(&mut self, start: u64, n: usize) -> Result<(Vec<f32>, Vec<f32>)> {
        if start + n as u64 > self.header.count {
            return Err(Error::invalid(format!(
                "records {start}..{} past end of {}",
                start + n as u64,
                self.header.count
            )));
        }
        let offset = HEADER_LEN as u64 + start * RECORD_LEN as u64;
        self.file
            .seek(SeekFrom::Start(offset))
            .map_err(|e| Error::io(&self.path, e))?;
        let mut raw = vec![0u8; n * RECORD_LEN];
        self.file.read_exact(&mut raw).map_err(|e| Error::io(&self.path, e))?;
        let mut pixels = Vec::with_capacity(n * IMAGE_LEN);
        let mut logits = Vec::with_capacity(n * NUM_CLASSES);
        for rec in raw.chunks(RECORD_LEN) {
            let vals = rec
                .chunks(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
            for (i, v) in vals.enumerate() {
                if i < IMAGE_LEN {
                    pixels.push(v);
                } else {
                    logits.push(v);
                }
            }
        }
        Ok((pixels, logits))
    }
}

/// Augment `epochs` passes over `train` and label every image with `logits_of`
/// (which receives normalized `(B, 3, 32, 32)` batches). Image `i` of epoch `e` uses
/// the random stream `seed -> e -> i`.
#[allow(clippy::too_many_arguments)]
pub fn generate_transfer_set(
    train: &Dataset,
    epochs: u32,
    config: &AugmentConfig,
    seed: u64,
    fingerprint: [u8; 32],
    path: &Path,
    batch: usize,
    mut logits_of: impl FnMut(&Tensor<f32>) -> Result<Tensor<f32>>,
) -> Result<TransferHeader> {
    config.validate()?;
    if epochs == 0 || train.is_empty() {
        return Err(Error::invalid("transfer set needs at least one epoch and one image"));
    }
    let header = TransferHeader {
        count: epochs as u64 * train.len() as u64,
        config: *config,
        fingerprint,
        epochs,
    };
    let mut writer = TransferWriter::create(path, &header)?;
    let root = RngStream::new(seed);
    let batch = batch.max(1);
    for e in 0..epochs {
        let er = root.split(e as u64);
        let mut start = 0;
        while start < train.len() {
            let end = (start + batch).min(train.len());
            let raw: Vec<Vec<f32>> = (start..end)
                .map(|i| augment_image(train.image(i), config, &mut er.split(i as u64)))
                .collect();
            let mut input = Vec::with_capacity(raw.len() * IMAGE_LEN);
            for img in &raw {
                let s = input.len();
                input.extend_from_slice(img);
                normalize_per_image(&mut input[s..]);
            }
            let x = Tensor::new(vec![raw.len(), CHANNELS, SIDE, SIDE], input)?;
            let z = logits_of(&x)?;
            if z.shape() != [raw.len(), NUM_CLASSES] {
                return Err(Error::shape(format!(
                    "ensemble returned logits of shape {:?}",
                    z.shape()
                )));
            }
            z.ensure_finite("ensemble logits")?;
            for (k, img) in raw.iter().enumerate() {
                writer.push(img, z.row(k))?;
            }
            start = end;
        }
    }
    writer.finish()?;
    Ok(header)
}
