//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "PDIFFCKP"
//! version  u32      1
//! count    u32      number of parameters
//! repeated count times:
//!   name_len u32
//!   name     name_len bytes, UTF-8
//!   rank     u32
//!   dims     rank x u64
//!   values   prod(dims) x f64
//! ```
//!
//! Optimizer moments are not stored.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::optim::ParamStore;
use crate::tensor::{Tensor, TensorError};

pub const MAGIC: &[u8; 8] = b"PDIFFCKP";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint at byte {offset}: {detail}")]
    Malformed { offset: usize, detail: String },
    #[error("checkpoint does not match the model: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub fn encode(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + store.num_values() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for id in store.ids() {
        let name = store.name(id).as_bytes();
        let value = store.get(id);
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(value.rank() as u32).to_le_bytes());
        for &d in value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() - self.pos < n {
            return Err(CheckpointError::Malformed {
                offset: self.pos,
                detail: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// Decode into `(name, tensor)` pairs in file order.
pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor)>, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(CheckpointError::Malformed {
            offset: 0,
            detail: "bad magic".into(),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(CheckpointError::Malformed {
            offset: 8,
            detail: format!("unsupported version {version}"),
        });
    }
    let count = r.u32("count")? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32("name length")? as usize;
        let at = r.pos;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|e| CheckpointError::Malformed {
                offset: at,
                detail: format!("name is not UTF-8: {e}"),
            })?
            .to_owned();
        let rank = r.u32("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u64("dimension")? as usize);
        }
        let numel = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or_else(|| {
            CheckpointError::Malformed {
                offset: r.pos,
                detail: format!("dimensions {dims:?} overflow"),
            }
        })?;
        let raw = r.take(numel.saturating_mul(8), "values")?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push((name, Tensor::new(&dims, values)?));
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Malformed {
            offset: r.pos,
            detail: "trailing bytes".into(),
        });
    }
    Ok(out)
}

pub fn save(store: &ParamStore, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, encode(store)).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Overwrite every parameter of `store` with the checkpointed value. Names and
/// shapes must match exactly.
pub fn load_into(store: &mut ParamStore, path: &Path) -> Result<(), CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    restore(store, &bytes)
}

pub fn restore(store: &mut ParamStore, bytes: &[u8]) -> Result<(), CheckpointError> {
    let entries = decode(bytes)?;
    if entries.len() != store.len() {
        return Err(CheckpointError::Mismatch(format!(
            "{} parameters in file, model has {}",
            entries.len(),
            store.len()
        )));
    }
    for (name, value) in entries {
        let id = store
            .id(&name)
            .ok_or_else(|| CheckpointError::Mismatch(format!("unknown parameter `{name}`")))?;
        store
            .set(id, value)
            .map_err(|e| CheckpointError::Mismatch(format!("`{name}`: {e}")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.add("a.w", Tensor::new(&[2, 3], vec![1.0, -2.0, 3.5, 0.0, 1e-300, -7.25]).unwrap())
            .unwrap();
        s.add("b", Tensor::scalar(0.125)).unwrap();
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let original = store();
        let bytes = encode(&original);
        let mut restored = store();
        for id in restored.ids().collect::<Vec<_>>() {
            let shape = restored.get(id).shape().to_vec();
            restored.set(id, Tensor::zeros(&shape)).unwrap();
        }
        restore(&mut restored, &bytes).unwrap();
        for id in original.ids() {
            assert_eq!(original.get(id), restored.get(id));
        }
    }

    #[test]
    fn layout_header() {
        let bytes = encode(&store());
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 3);
        assert_eq!(&bytes[20..23], b"a.w");
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode(&store());
        let err = decode(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, CheckpointError::Malformed { .. }), "{err}");
    }

    #[test]
    fn shape_mismatch_rejected() {
        let bytes = encode(&store());
        let mut other = ParamStore::new();
        other.add("a.w", Tensor::zeros(&[3, 2])).unwrap();
        other.add("b", Tensor::scalar(0.0)).unwrap();
        assert!(matches!(
            restore(&mut other, &bytes),
            Err(CheckpointError::Mismatch(_))
        ));
    }
}
