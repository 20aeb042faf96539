//! Dataset ingestion and construction.
//!
//! Builds the legal dataset (one key-derived perturbation stamped on every
//! clean image), the illegal dataset (fresh per-image noise, optionally with
//! deranged labels), and the attacker's forged dataset, and serves balanced
//! 50/50 legal/illegal batches to the trainer.

mod batches;
mod build;
mod idx;
mod isds;
pub mod synth;

pub use batches::{mixed_batches, Batch, BatchStream};
pub use build::{build_forged, build_illegal, build_legal, LabelMode};
pub use idx::{load_idx, save_idx};
pub use isds::{load_isds, save_isds};

use crate::error::{IsnnError, Result};

/// Provenance of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Clean,
    Legal,
    Illegal,
    Forged,
}

/// Byte images plus labels, tagged with provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    /// n * C*H*W bytes, sample-major.
    pub images: Vec<u8>,
    pub labels: Vec<u8>,
    /// Deranged labels L', present only for label-inconsistent illegal data.
    pub shuffled_labels: Option<Vec<u8>>,
    /// [C, H, W] per sample.
    pub shape: [usize; 3],
    pub kind: DatasetKind,
    pub epsilon_used: u8,
    pub build_seed: u64,
}

impl LabeledDataset {
    pub fn new(
        images: Vec<u8>,
        labels: Vec<u8>,
        shape: [usize; 3],
        kind: DatasetKind,
    ) -> Result<Self> {
        let sample_len: usize = shape.iter().product();
        if sample_len == 0 || images.len() != labels.len() * sample_len {
            return Err(IsnnError::Format {
                what: "dataset",
                detail: format!(
                    "{} image bytes does not match {} labels x {} sample bytes",
                    images.len(),
                    labels.len(),
                    sample_len
                ),
            });
        }
        Ok(LabeledDataset {
            images,
            labels,
            shuffled_labels: None,
            shape,
            kind,
            epsilon_used: 0,
            build_seed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let s = self.sample_len();
        &self.images[i * s..(i + 1) * s]
    }

    /// Number of classes implied by the labels (max + 1).
    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m as usize + 1)
    }

    /// Copy of the first `n` samples, keeping all tags.
    pub fn subset(&self, n: usize) -> LabeledDataset {
        self.subset_range(0, n.min(self.len()))
    }

    pub fn subset_range(&self, start: usize, end: usize) -> LabeledDataset {
        let s = self.sample_len();
        LabeledDataset {
            images: self.images[start * s..end * s].to_vec(),
            labels: self.labels[start..end].to_vec(),
            shuffled_labels: self.shuffled_labels.as_ref().map(|l| l[start..end].to_vec()),
            shape: self.shape,
            kind: self.kind,
            epsilon_used: self.epsilon_used,
            build_seed: self.build_seed,
        }
    }

    /// Normalized f64 pixels of the samples at `indices`, concatenated.
    pub fn gather_normalized(&self, indices: &[usize]) -> Vec<f64> {
        let s = self.sample_len();
        let mut out = Vec::with_capacity(indices.len() * s);
        for &i in indices {
            out.extend(self.image(i).iter().map(|&b| f64::from(b) / 255.0));
        }
        out
    }

    /// Whole dataset as normalized f64 pixels.
    pub fn all_normalized(&self) -> Vec<f64> {
        self.images.iter().map(|&b| f64::from(b) / 255.0).collect()
    }
}
