//! Balanced 50/50 legal/illegal batch scheduling.

use rand::seq::SliceRandom;

use super::LabeledDataset;
use crate::error::{IsnnError, Result};
use crate::rng::{chacha, per_index_seed};

/// One mixed batch: indices into the legal and illegal datasets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub legal: Vec<usize>,
    pub illegal: Vec<usize>,
}

/// Epoch-indexed schedule of balanced batches. Each epoch reshuffles both
/// sides from the order seed; every sample of each side appears exactly once
/// per epoch, and every batch holds equally many legal and illegal samples.
#[derive(Debug, Clone)]
pub struct BatchStream {
    n: usize,
    half: usize,
    order_seed: u64,
}

pub fn mixed_batches(
    legal: &LabeledDataset,
    illegal: &LabeledDataset,
    batch_size: usize,
    order_seed: u64,
) -> Result<BatchStream> {
    if batch_size == 0 || batch_size % 2 != 0 {
        return Err(IsnnError::InvalidArgument(format!(
            "batch size must be even and positive, got {batch_size}"
        )));
    }
    if legal.is_empty() || illegal.is_empty() {
        return Err(IsnnError::Empty("mixed batch inputs"));
    }
    if legal.len() != illegal.len() {
        return Err(IsnnError::InvalidArgument(format!(
            "legal ({}) and illegal ({}) datasets must have equal cardinality",
            legal.len(),
            illegal.len()
        )));
    }
    Ok(BatchStream {
        n: legal.len(),
        half: batch_size / 2,
        order_seed,
    })
}

impl BatchStream {
    /// Batches for one epoch; a trailing partial batch keeps the 50/50 mix.
    pub fn epoch(&self, epoch: usize) -> Vec<Batch> {
        let mut legal: Vec<usize> = (0..self.n).collect();
        let mut illegal: Vec<usize> = (0..self.n).collect();
        let mut rng = chacha(per_index_seed(self.order_seed, epoch as u64));
        legal.shuffle(&mut rng);
        illegal.shuffle(&mut rng);
        legal
            .chunks(self.half)
            .zip(illegal.chunks(self.half))
            .map(|(l, i)| Batch {
                legal: l.to_vec(),
                illegal: i.to_vec(),
            })
            .collect()
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.n.div_ceil(self.half)
    }
}
