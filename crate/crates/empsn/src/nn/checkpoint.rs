//! Checkpoint serialization: a JSON header describing named flat arrays,
//! followed by a little-endian 64-bit float payload. Round-trips are
//! bit-exact for f64 stores. Optimizer moment buffers are not persisted;
//! resuming restarts Adam's moments from zero.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::optim::ParameterStore;
use super::NnError;
use crate::scalar::Real;

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    name: String,
    rows: usize,
    cols: usize,
    /// Scalar offset into the payload.
    offset: usize,
    trainable: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    params: Vec<ParamRecord>,
    meta: serde_json::Value,
    step: u64,
}

/// Writes the store (values only, all entries including frozen buffers)
/// plus caller-supplied metadata.
pub fn save<R: Real>(
    store: &ParameterStore<R>,
    meta: &serde_json::Value,
    path: &Path,
) -> Result<(), NnError> {
    let mut params = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    let mut offset = 0usize;
    for name in store.names(false) {
        let value = store.get(&name)?;
        let (rows, cols) = value.shape();
        params.push(ParamRecord {
            name: name.clone(),
            rows,
            cols,
            offset,
            trainable: store.is_trainable(&name),
        });
        for &v in value.data() {
            payload.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
        offset += rows * cols;
    }
    let header = Header {
        params,
        meta: meta.clone(),
        step: store.step(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(8 + header_bytes.len() + payload.len());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(&payload);
    fs::write(path, out)?;
    Ok(())
}

/// Reads a checkpoint back into a fresh store plus its metadata.
pub fn load<R: Real>(path: &Path) -> Result<(ParameterStore<R>, serde_json::Value), NnError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 8 {
        return Err(NnError::Checkpoint("file shorter than header length".into()));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let payload_start = 8 + header_len;
    if bytes.len() < payload_start {
        return Err(NnError::Checkpoint("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[8..payload_start])
        .map_err(|e| NnError::Checkpoint(format!("bad header: {e}")))?;
    let payload = &bytes[payload_start..];
    if payload.len() % 8 != 0 {
        return Err(NnError::Checkpoint("payload not a whole number of f64s".into()));
    }
    let total = payload.len() / 8;
    let mut store = ParameterStore::new();
    for rec in &header.params {
        let len = rec.rows * rec.cols;
        let end = rec
            .offset
            .checked_add(len)
            .ok_or_else(|| NnError::Checkpoint("offset overflow".into()))?;
        if end > total {
            return Err(NnError::Checkpoint(format!(
                "{}: payload range {}..{} exceeds {} scalars",
                rec.name, rec.offset, end, total
            )));
        }
        let data: Vec<R> = (rec.offset..end)
            .map(|i| {
                let raw = u64::from_le_bytes(payload[i * 8..i * 8 + 8].try_into().unwrap());
                R::from_f64_lossy(f64::from_bits(raw))
            })
            .collect();
        let value = Matrix::from_vec(rec.rows, rec.cols, data);
        if rec.trainable {
            store.register(&rec.name, value);
        } else {
            store.register_frozen(&rec.name, value);
        }
    }
    store.set_step(header.step);
    Ok((store, header.meta))
}
