//! Binary checkpoint format.
//!
//! ```text
//! "MBCK" | u32 version | u32 layer count | u32 record count
//! record: u32 name length | name (utf-8) | u32 ndim | ndim x u64 dims
//!         | u8 element bytes (4 or 8) | values, little-endian
//! ```

use super::{Float, ModelGraph, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MBCK";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub elem_bytes: u8,
    /// Raw little-endian element bytes.
    pub bytes: Vec<u8>,
}

pub fn write_checkpoint<T: Float>(model: &ModelGraph<T>) -> Vec<u8> {
    let named = model.named_params();
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(model.layers.len() as u32).to_le_bytes());
    out.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, p) in named {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(p.value.ndim() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.push(T::BYTES as u8);
        for &v in p.value.data() {
            v.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format(None, "checkpoint truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut a = [0u8; 8];
        a.copy_from_slice(self.take(8)?);
        Ok(u64::from_le_bytes(a))
    }
}

/// Parse a checkpoint into its layer count and records.
pub fn read_checkpoint(bytes: &[u8]) -> Result<(u32, Vec<CheckpointRecord>)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::format(None, "not a checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(None, format!("unsupported checkpoint version {version}")));
    }
    let layers = r.u32()?;
    let count = r.u32()? as usize;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::format(None, "checkpoint record name is not utf-8"))?;
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let elem_bytes = r.take(1)?[0];
        if elem_bytes != 4 && elem_bytes != 8 {
            return Err(Error::format(None, format!("bad element width {elem_bytes}")));
        }
        let n: usize = shape.iter().product();
        let bytes = r.take(n * elem_bytes as usize)?.to_vec();
        records.push(CheckpointRecord {
            name,
            shape,
            elem_bytes,
            bytes,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::format(None, "trailing bytes after checkpoint records"));
    }
    Ok((layers, records))
}

impl CheckpointRecord {
    pub fn to_tensor<T: Float>(&self) -> Result<Tensor<T>> {
        let step = self.elem_bytes as usize;
        let data: Vec<T> = self
            .bytes
            .chunks(step)
            .map(|c| match step {
                4 => T::from_f64_lossy(f32::read_le(c) as f64),
                _ => T::from_f64_lossy(f64::read_le(c)),
            })
            .collect();
        Tensor::new(self.shape.clone(), data)
    }
}

impl<T: Float> ModelGraph<T> {
    /// Load parameter values from checkpoint bytes into a model of matching layout.
    pub fn load_checkpoint(&mut self, bytes: &[u8]) -> Result<()> {
        let (layers, records) = read_checkpoint(bytes)?;
        if layers as usize != self.layers.len() {
            return Err(Error::shape(format!(
                "checkpoint has {layers} layers, model has {}",
                self.layers.len()
            )));
        }
        let names: Vec<String> = self.named_params().into_iter().map(|(n, _)| n).collect();
        if names.len() != records.len() {
            return Err(Error::shape("checkpoint parameter count differs from model"));
        }
        let mut values = Vec::with_capacity(records.len());
        for (name, rec) in names.iter().zip(&records) {
            if *name != rec.name {
                return Err(Error::shape(format!(
                    "checkpoint record {} where model expects {name}",
                    rec.name
                )));
            }
            values.push(rec.to_tensor()?);
        }
        self.restore(&values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::tensor::{glorot_uniform, Activation, Dense, Layer};

    fn model(seed: u64) -> ModelGraph<f32> {
        let mut rng = RngStream::new(seed);
        let w1 = glorot_uniform(&[6, 5], 6, 5, 1.0, &mut rng).unwrap();
        let w2 = glorot_uniform(&[5, 10], 5, 10, 1.0, &mut rng).unwrap();
        ModelGraph::new(vec![
            Layer::Dense(Dense::new(w1, Tensor::filled(&[5], 0.25), Activation::Relu)),
            Layer::Dense(Dense::new(w2, Tensor::zeros(&[10]), Activation::Linear)),
        ])
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let a = model(1);
        let bytes = write_checkpoint(&a);
        assert_eq!(&bytes[..4], b"MBCK");
        let mut b = model(2);
        b.load_checkpoint(&bytes).unwrap();
        assert_eq!(write_checkpoint(&b), bytes);
    }

    #[test]
    fn truncation_and_bad_magic_rejected() {
        let bytes = write_checkpoint(&model(1));
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad).is_err());
    }
}
