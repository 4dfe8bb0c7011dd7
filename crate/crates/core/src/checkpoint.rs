//! Single-file parameter archive.
//!
//! Layout: the 8-byte magic `STNGRSP\0`, a little-endian `u32` format
//! version, a little-endian `u64` manifest length, the JSON manifest, then
//! every parameter's values as little-endian `f32` in manifest order. The
//! manifest records the model configuration, its SHA-256 hash and each
//! parameter's name, shape and offset. No timestamps are stored, so equal
//! parameters give byte-identical files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::ParamStore;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"STNGRSP\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in `f32` values from the start of the data block.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub params: Vec<ParamEntry>,
}

/// Hex SHA-256 of the compact JSON encoding of `value`.
pub fn hash_json<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

pub fn encode_checkpoint<C: Serialize>(config: &C, store: &ParamStore) -> Result<Vec<u8>> {
    let mut params = Vec::with_capacity(store.len());
    let mut offset = 0;
    for p in store.iter() {
        params.push(ParamEntry {
            name: p.name.clone(),
            shape: p.tensor.shape().to_vec(),
            offset,
        });
        offset += p.tensor.len();
    }
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_VERSION,
        config: serde_json::to_value(config)?,
        config_hash: hash_json(config)?,
        params,
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(20 + json.len() + 4 * offset);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in store.iter() {
        for &v in p.tensor.values() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Parsed archive: manifest plus the flat `f32` data block.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub data: Vec<f32>,
}

impl Checkpoint {
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |what: &str| Error::Mismatch(format!("not a valid checkpoint: {what}"));
        if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("missing magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Mismatch(format!(
                "checkpoint format {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..20 + len).ok_or_else(|| bad("truncated manifest"))?;
        let manifest: CheckpointManifest =
            serde_json::from_slice(body).map_err(|e| bad(&format!("manifest: {e}")))?;
        let rest = &bytes[20 + len..];
        if rest.len() % 4 != 0 {
            return Err(bad("data block is not a whole number of f32 values"));
        }
        let data: Vec<f32> = rest
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let expected: usize = manifest
            .params
            .iter()
            .map(|p| p.shape.iter().product::<usize>())
            .sum();
        if expected != data.len() {
            return Err(bad(&format!("{} values stored, manifest describes {expected}", data.len())));
        }
        Ok(Checkpoint { manifest, data })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Copies stored values into `store`. Names and shapes must match exactly.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<()> {
        if self.manifest.params.len() != store.len() {
            return Err(Error::Mismatch(format!(
                "checkpoint has {} parameters, model has {}",
                self.manifest.params.len(),
                store.len()
            )));
        }
        for entry in &self.manifest.params {
            let t = store
                .get(&entry.name)
                .map_err(|_| Error::Mismatch(format!("model has no parameter {}", entry.name)))?;
            if t.shape() != entry.shape.as_slice() {
                return Err(Error::Mismatch(format!(
                    "parameter {}: checkpoint shape {:?}, model shape {:?}",
                    entry.name,
                    entry.shape,
                    t.shape()
                )));
            }
            let n: usize = entry.shape.iter().product();
            let values = self.data[entry.offset..entry.offset + n].iter().map(|&v| v as f64).collect();
            store.set_values(&entry.name, values)?;
        }
        Ok(())
    }
}

pub fn write_checkpoint<C: Serialize>(path: &Path, config: &C, store: &ParamStore) -> Result<()> {
    let bytes = encode_checkpoint(config, store)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("a.weight", &[2, 3], vec![0.1, -2.5, 3.75, 1e-8, -0.0, 7.0]).unwrap();
        s.insert("a.bias", &[2], vec![1.0 / 3.0, f64::from(f32::MAX)]).unwrap();
        s
    }

    #[test]
    fn bit_exact_round_trip() {
        let s = store();
        let bytes = encode_checkpoint(&"cfg", &s).unwrap();
        let ck = Checkpoint::decode(&bytes).unwrap();
        let mut t = store();
        t.set_values("a.bias", vec![0.0, 0.0]).unwrap();
        ck.restore_into(&mut t).unwrap();
        for (p, q) in s.iter().zip(t.iter()) {
            let (a, b): (Vec<u64>, Vec<u64>) = (
                p.tensor.values().iter().map(|v| v.to_bits()).collect(),
                q.tensor.values().iter().map(|v| v.to_bits()).collect(),
            );
            assert_eq!(a, b);
        }
        assert_eq!(encode_checkpoint(&"cfg", &t).unwrap(), bytes);
    }

    #[test]
    fn corrupt_and_mismatched_archives_rejected() {
        let bytes = encode_checkpoint(&"cfg", &store()).unwrap();
        assert!(matches!(Checkpoint::decode(&bytes[..bytes.len() - 2]), Err(Error::Mismatch(_))));
        assert!(matches!(Checkpoint::decode(b"garbage garbage garbage"), Err(Error::Mismatch(_))));
        let mut other = ParamStore::new();
        other.insert("a.weight", &[3, 2], vec![0.0; 6]).unwrap();
        other.insert("a.bias", &[2], vec![0.0; 2]).unwrap();
        let ck = Checkpoint::decode(&bytes).unwrap();
        assert!(matches!(ck.restore_into(&mut other), Err(Error::Mismatch(_))));
    }
}
