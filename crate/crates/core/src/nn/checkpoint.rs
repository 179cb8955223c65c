//! `FSPC1` checkpoint encoding: magic, little-endian `u32` header length,
//! JSON header, then `f32` little-endian payloads in header order.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::params::ParamStore;
use super::tensor::Tensor;

pub const MAGIC: &[u8; 5] = b"FSPC1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub kind: String,
    pub config: serde_json::Value,
    pub step: u64,
    pub params: Vec<ParamEntry>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("bad magic")]
    Magic,
    #[error("truncated checkpoint")]
    Truncated,
    #[error("bad header: {0}")]
    Header(String),
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("checkpoint lacks parameter {0}")]
    Missing(String),
    #[error("shape of {name}: model {model:?}, checkpoint {file:?}")]
    Shape { name: String, model: [usize; 2], file: [usize; 2] },
    #[error("checkpoint kind {found:?}, expected {expected:?}")]
    Kind { expected: String, found: String },
}

pub fn encode(kind: &str, config: serde_json::Value, step: u64, store: &ParamStore) -> Vec<u8> {
    let header = CheckpointHeader {
        format_version: FORMAT_VERSION,
        kind: kind.into(),
        config,
        step,
        params: store.iter().map(|(_, n, t)| ParamEntry { name: n.into(), shape: t.shape() }).collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(9 + json.len() + store.numel() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, _, t) in store.iter() {
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Decodes into a fresh store with the checkpoint's names and shapes.
pub fn decode(bytes: &[u8]) -> Result<(CheckpointHeader, ParamStore), CheckpointError> {
    let rest = bytes.strip_prefix(MAGIC.as_slice()).ok_or(CheckpointError::Magic)?;
    let len_bytes: [u8; 4] = rest.get(..4).ok_or(CheckpointError::Truncated)?.try_into().unwrap();
    let hlen = u32::from_le_bytes(len_bytes) as usize;
    let json = rest.get(4..4 + hlen).ok_or(CheckpointError::Truncated)?;
    let header: CheckpointHeader =
        serde_json::from_slice(json).map_err(|e| CheckpointError::Header(alloc::format!("{e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(CheckpointError::Version(header.format_version));
    }
    let mut payload = &rest[4 + hlen..];
    let mut store = ParamStore::new();
    for p in &header.params {
        let n = p.shape[0] * p.shape[1];
        let chunk = payload.get(..n * 4).ok_or(CheckpointError::Truncated)?;
        let data = chunk.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect();
        store.add(p.name.clone(), Tensor::new(p.shape[0], p.shape[1], data).unwrap());
        payload = &payload[n * 4..];
    }
    if !payload.is_empty() {
        return Err(CheckpointError::Trailing(payload.len()));
    }
    Ok((header, store))
}

/// Copies parameters from a checkpoint into an existing model store,
/// matching by name. Every model parameter must be present with its shape.
pub fn load_into(bytes: &[u8], kind: &str, store: &mut ParamStore) -> Result<CheckpointHeader, CheckpointError> {
    let (header, file) = decode(bytes)?;
    if header.kind != kind {
        return Err(CheckpointError::Kind { expected: kind.into(), found: header.kind });
    }
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = String::from(store.name(id));
        let fid = file.id(&name).ok_or_else(|| CheckpointError::Missing(name.clone()))?;
        let (m, f) = (store.get(id).shape(), file.get(fid).shape());
        if m != f {
            return Err(CheckpointError::Shape { name, model: m, file: f });
        }
        *store.get_mut(id) = file.get(fid).clone();
    }
    Ok(header)
}
