//! ISDS dataset cache: magic `ISDS`, version u32, N,H,W,C u32 little-endian,
//! raw u8 pixels, raw u8 labels, optional raw u8 shuffled labels.

use std::fs;
use std::path::Path;

use super::{DatasetKind, LabeledDataset};
use crate::error::{IsnnError, Result};

const MAGIC: &[u8; 4] = b"ISDS";
const VERSION: u32 = 1;

pub fn save_isds(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let [c, h, w] = ds.shape;
    let mut out = Vec::with_capacity(24 + ds.images.len() + 2 * ds.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    out.extend_from_slice(&ds.images);
    out.extend_from_slice(&ds.labels);
    if let Some(sl) = &ds.shuffled_labels {
        out.extend_from_slice(sl);
    }
    fs::write(path, out).map_err(|e| IsnnError::io(path.display().to_string(), e))
}

pub fn load_isds(path: &Path) -> Result<LabeledDataset> {
    let data = fs::read(path).map_err(|e| IsnnError::io(path.display().to_string(), e))?;
    if data.len() < 24 || &data[..4] != MAGIC {
        return Err(IsnnError::Format {
            what: "isds",
            detail: "missing ISDS magic".into(),
        });
    }
    let le = |off: usize| u32::from_le_bytes([data[off], data[off + 1], data[off + 2], data[off + 3]]);
    let version = le(4);
    if version != VERSION {
        return Err(IsnnError::Format {
            what: "isds",
            detail: format!("unsupported version {version}"),
        });
    }
    let n = le(8) as usize;
    let h = le(12) as usize;
    let w = le(16) as usize;
    let c = le(20) as usize;
    let pix_len = n * h * w * c;
    let base = 24 + pix_len + n;
    let (has_shuffled, expect) = if data.len() == base {
        (false, base)
    } else {
        (true, base + n)
    };
    if data.len() != expect {
        return Err(IsnnError::Format {
            what: "isds",
            detail: format!("file length {} != expected {}", data.len(), expect),
        });
    }
    let mut ds = LabeledDataset::new(
        data[24..24 + pix_len].to_vec(),
        data[24 + pix_len..24 + pix_len + n].to_vec(),
        [c, h, w],
        DatasetKind::Clean,
    )?;
    if has_shuffled {
        ds.shuffled_labels = Some(data[base..base + n].to_vec());
    }
    Ok(ds)
}
