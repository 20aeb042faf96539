//! IDX (MNIST-style) ingestion: big-endian headers, magic 0x803 images /
//! 0x801 labels, bit-exact byte loading.

use std::fs;
use std::path::Path;

use super::{DatasetKind, LabeledDataset};
use crate::error::{IsnnError, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(data: &[u8], off: usize, what: &'static str) -> Result<u32> {
    data.get(off..off + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IsnnError::Format {
            what: "idx",
            detail: format!("truncated header reading {what}"),
        })
}

pub fn load_idx(path_images: &Path, path_labels: &Path) -> Result<LabeledDataset> {
    let img = fs::read(path_images).map_err(|e| IsnnError::io(path_images.display().to_string(), e))?;
    let lab = fs::read(path_labels).map_err(|e| IsnnError::io(path_labels.display().to_string(), e))?;

    let magic = be_u32(&img, 0, "image magic")?;
    if magic != IMAGES_MAGIC {
        return Err(IsnnError::Format {
            what: "idx",
            detail: format!("image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        });
    }
    let n = be_u32(&img, 4, "image count")? as usize;
    let h = be_u32(&img, 8, "rows")? as usize;
    let w = be_u32(&img, 12, "cols")? as usize;
    let expect = 16 + n * h * w;
    if img.len() != expect {
        return Err(IsnnError::Format {
            what: "idx",
            detail: format!("image file length {} != expected {}", img.len(), expect),
        });
    }

    let lmagic = be_u32(&lab, 0, "label magic")?;
    if lmagic != LABELS_MAGIC {
        return Err(IsnnError::Format {
            what: "idx",
            detail: format!("label magic {lmagic:#010x}, expected {LABELS_MAGIC:#010x}"),
        });
    }
    let ln = be_u32(&lab, 4, "label count")? as usize;
    if ln != n {
        return Err(IsnnError::Format {
            what: "idx",
            detail: format!("{n} images but {ln} labels"),
        });
    }
    let lexpect = 8 + n;
    if lab.len() != lexpect {
        return Err(IsnnError::Format {
            what: "idx",
            detail: format!("label file length {} != expected {}", lab.len(), lexpect),
        });
    }

    LabeledDataset::new(
        img[16..].to_vec(),
        lab[8..].to_vec(),
        [1, h, w],
        DatasetKind::Clean,
    )
}

/// Write a dataset pair back out in IDX format (used by the synthetic
/// corpus generator).
pub fn save_idx(ds: &LabeledDataset, path_images: &Path, path_labels: &Path) -> Result<()> {
    let [c, h, w] = ds.shape;
    if c != 1 {
        return Err(IsnnError::InvalidArgument(
            "idx export supports single-channel images only".into(),
        ));
    }
    let mut img = Vec::with_capacity(16 + ds.images.len());
    img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    img.extend_from_slice(&(h as u32).to_be_bytes());
    img.extend_from_slice(&(w as u32).to_be_bytes());
    img.extend_from_slice(&ds.images);
    fs::write(path_images, img).map_err(|e| IsnnError::io(path_images.display().to_string(), e))?;

    let mut lab = Vec::with_capacity(8 + ds.len());
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    lab.extend_from_slice(&ds.labels);
    fs::write(path_labels, lab).map_err(|e| IsnnError::io(path_labels.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path, n: u32, h: u32, w: u32, pixels: &[u8], labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
        let pi = dir.join("images.idx");
        let pl = dir.join("labels.idx");
        let mut img = Vec::new();
        img.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        img.extend_from_slice(&n.to_be_bytes());
        img.extend_from_slice(&h.to_be_bytes());
        img.extend_from_slice(&w.to_be_bytes());
        img.extend_from_slice(pixels);
        fs::write(&pi, img).unwrap();
        let mut lab = Vec::new();
        lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        lab.extend_from_slice(&n.to_be_bytes());
        lab.extend_from_slice(labels);
        fs::write(&pl, lab).unwrap();
        (pi, pl)
    }

    #[test]
    fn three_image_fixture_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = (0..3 * 2 * 2).map(|i| i as u8 * 10).collect();
        let (pi, pl) = fixture(dir.path(), 3, 2, 2, &pixels, &[0, 1, 2]);
        let ds = load_idx(&pi, &pl).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.shape, [1, 2, 2]);
        assert_eq!(ds.images, pixels);
        assert_eq!(ds.labels, vec![0, 1, 2]);
    }

    #[test]
    fn truncated_file_names_expected_length() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = vec![0; 3 * 4 - 1]; // one byte short
        let (pi, pl) = fixture(dir.path(), 3, 2, 2, &pixels, &[0, 1, 2]);
        let err = load_idx(&pi, &pl).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("27") && msg.contains("28"), "got: {msg}");
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let pi = dir.path().join("bad.idx");
        fs::write(&pi, 0x0000_0804u32.to_be_bytes()).unwrap();
        let pl = dir.path().join("bad_labels.idx");
        fs::write(&pl, LABELS_MAGIC.to_be_bytes()).unwrap();
        assert!(load_idx(&pi, &pl).is_err());
    }

    #[test]
    fn count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = vec![0; 3 * 4];
        let (pi, _) = fixture(dir.path(), 3, 2, 2, &pixels, &[0, 1, 2]);
        let pl = dir.path().join("short_labels.idx");
        let mut lab = Vec::new();
        lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        lab.extend_from_slice(&2u32.to_be_bytes());
        lab.extend_from_slice(&[0, 1]);
        fs::write(&pl, lab).unwrap();
        assert!(load_idx(&pi, &pl).is_err());
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = LabeledDataset::new(
            (0..2 * 9).map(|i| i as u8).collect(),
            vec![4, 7],
            [1, 3, 3],
            DatasetKind::Clean,
        )
        .unwrap();
        let pi = dir.path().join("img.idx");
        let pl = dir.path().join("lab.idx");
        save_idx(&ds, &pi, &pl).unwrap();
        assert_eq!(load_idx(&pi, &pl).unwrap(), ds);
    }

    /// Histogram check against the public MNIST t10k files; runs only when
    /// the files are present locally.
    #[test]
    fn mnist_t10k_label_histogram() {
        let dir = match std::env::var("ISNN_MNIST_DIR") {
            Ok(d) => std::path::PathBuf::from(d),
            Err(_) => return, // dataset not available in this environment
        };
        let ds = load_idx(
            &dir.join("t10k-images-idx3-ubyte"),
            &dir.join("t10k-labels-idx1-ubyte"),
        )
        .unwrap();
        assert_eq!(ds.len(), 10_000);
        let mut hist = [0usize; 10];
        for &l in &ds.labels {
            hist[l as usize] += 1;
        }
        assert_eq!(
            hist,
            [980, 1135, 1032, 1010, 982, 892, 958, 1028, 974, 1009]
        );
    }
}
