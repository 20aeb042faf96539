//! Checkpoint serialization.
//!
//! Layout: magic `ISNN`, version u32 LE, header length u32 LE, header JSON,
//! param count u64 LE, f64 LE parameters, CRC32 (of everything before it).

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Method;
use crate::error::{IsnnError, Result};
use crate::nn::{LayerSpec, Model};

const MAGIC: &[u8; 4] = b"ISNN";
const VERSION: u32 = 1;

/// Provenance carried alongside the weights. `sha256_m` binds a protected
/// model to its key material without storing the ciphertext itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub method: Option<Method>,
    pub epsilon: i64,
    pub seed: u64,
    pub epochs_trained: usize,
    pub sha256_m: Option<String>,
    pub baseline_t: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    layers: Vec<LayerSpec>,
    input_shape: [usize; 3],
    num_classes: usize,
    meta: CheckpointMeta,
}

#[derive(Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub meta: CheckpointMeta,
}

pub fn save_checkpoint(path: &Path, model: &Model, meta: &CheckpointMeta) -> Result<()> {
    let header = Header {
        layers: model.layers().to_vec(),
        input_shape: model.input_shape(),
        num_classes: model.num_classes(),
        meta: meta.clone(),
    };
    let header_json = serde_json::to_vec(&header).map_err(|e| IsnnError::Format {
        what: "checkpoint header",
        detail: e.to_string(),
    })?;
    let mut buf = Vec::with_capacity(16 + header_json.len() + model.num_params() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_json);
    buf.extend_from_slice(&(model.num_params() as u64).to_le_bytes());
    for p in model.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    let io_err = |source| IsnnError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(&buf).map_err(|source| IsnnError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|source| IsnnError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let fmt = |detail: String| IsnnError::Format {
        what: "checkpoint",
        detail,
    };
    if bytes.len() < 20 {
        return Err(fmt(format!("file too short ({} bytes)", bytes.len())));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(fmt(format!("crc mismatch: stored {stored:08x}, computed {actual:08x}")));
    }
    if &body[..4] != MAGIC {
        return Err(fmt("bad magic".into()));
    }
    let version = u32::from_le_bytes(body[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(fmt(format!("unsupported version {version}")));
    }
    let header_len = u32::from_le_bytes(body[8..12].try_into().unwrap()) as usize;
    let header_end = 12 + header_len;
    if body.len() < header_end + 8 {
        return Err(fmt("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&body[12..header_end])
        .map_err(|e| fmt(format!("header json: {e}")))?;
    let n = u64::from_le_bytes(body[header_end..header_end + 8].try_into().unwrap()) as usize;
    let params_start = header_end + 8;
    if body.len() != params_start + n * 8 {
        return Err(fmt(format!(
            "expected {} parameter bytes, found {}",
            n * 8,
            body.len() - params_start
        )));
    }
    let params: Vec<f64> = body[params_start..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut model = Model::new(header.layers, header.input_shape, header.num_classes)?;
    model.set_params(params)?;
    Ok(Checkpoint {
        model,
        meta: header.meta,
    })
}
