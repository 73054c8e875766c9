//! Binary parameter file: magic, little-endian `u64` header length, a JSON
//! header naming each tensor and its shape, then every tensor's `f64` values
//! little-endian in header order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{AutodiffError, ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"UWBCKPT1";

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config_hash: String,
    tensors: Vec<Entry>,
}

fn io(path: &Path, source: std::io::Error) -> AutodiffError {
    AutodiffError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn corrupt(msg: impl Into<String>) -> AutodiffError {
    AutodiffError::Checkpoint(msg.into())
}

pub fn write_checkpoint(path: &Path, params: &ParamStore, config_hash: &str) -> Result<(), AutodiffError> {
    let header = Header {
        config_hash: config_hash.to_string(),
        tensors: params
            .iter()
            .map(|(n, t)| Entry {
                name: n.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| corrupt(e.to_string()))?;
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * params.count());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, t) in params.iter() {
        for x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| io(path, e))
}

/// Reads a checkpoint and returns its parameters and config hash.
pub fn read_checkpoint(path: &Path) -> Result<(ParamStore, String), AutodiffError> {
    let bytes = fs::read(path).map_err(|e| io(path, e))?;
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| corrupt(e.to_string()))?;
    let mut pos = 16 + hlen;
    let mut store = ParamStore::new();
    for e in header.tensors {
        let n: usize = e.shape.iter().product();
        let raw = bytes
            .get(pos..pos + 8 * n)
            .ok_or_else(|| corrupt(format!("truncated data for {}", e.name)))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        store.insert(&e.name, Tensor::new(e.shape, data)?);
        pos += 8 * n;
    }
    if pos != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok((store, header.config_hash))
}

/// Loads a checkpoint into `params`, requiring the same config hash and the
/// same names and shapes.
pub fn load_checkpoint(path: &Path, params: &mut ParamStore, config_hash: &str) -> Result<(), AutodiffError> {
    let (loaded, hash) = read_checkpoint(path)?;
    if hash != config_hash {
        return Err(AutodiffError::ConfigMismatch {
            expected: config_hash.to_string(),
            found: hash,
        });
    }
    let want: Vec<&str> = params.names().collect();
    let got: Vec<&str> = loaded.names().collect();
    if want != got {
        return Err(corrupt(format!("parameter names differ: expected {want:?}, found {got:?}")));
    }
    for (name, t) in loaded.iter() {
        let dst = params.get_mut(name)?;
        if dst.shape() != t.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "load_checkpoint",
                lhs: dst.shape().to_vec(),
                rhs: t.shape().to_vec(),
            });
        }
        *dst = t.clone();
    }
    Ok(())
}
