//! Legal / illegal / forged dataset construction.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetKind, LabeledDataset};
use crate::error::{IsnnError, Result};
use crate::exec;
use crate::keying::{sample_noise, NoiseType, Origin, Perturbation};
use crate::rng::{chacha, per_index_seed};

/// How illegal samples are labeled: label-consistent keeps the true labels,
/// label-inconsistent adds deranged labels L'.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    Lc,
    Li,
}

/// Stamp the single dataset-wide legal perturbation on every clean image.
pub fn build_legal(clean: &LabeledDataset, delta: &Perturbation) -> Result<LabeledDataset> {
    if delta.origin != Origin::Legal {
        return Err(IsnnError::InvalidArgument(
            "build_legal requires a legal-origin perturbation".into(),
        ));
    }
    if delta.shape != clean.shape {
        return Err(IsnnError::ShapeMismatch {
            expected: clean.shape.to_vec(),
            actual: delta.shape.to_vec(),
        });
    }
    let s = clean.sample_len();
    let chunks = exec::map_chunks(clean.len(), 256, |r| {
        let mut out = vec![0u8; r.len() * s];
        for (k, i) in r.enumerate() {
            delta.stamp(clean.image(i), &mut out[k * s..(k + 1) * s]);
        }
        out
    });
    let images = chunks.concat();
    let mut ds = LabeledDataset::new(images, clean.labels.clone(), clean.shape, DatasetKind::Legal)?;
    ds.epsilon_used = delta.epsilon;
    Ok(ds)
}

/// Fixed-point-free class permutation drawn from a seeded stream.
pub fn class_derangement(num_classes: usize, rng: &mut impl Rng) -> Result<Vec<u8>> {
    if num_classes < 2 {
        return Err(IsnnError::InvalidArgument(
            "no derangement exists for fewer than 2 classes".into(),
        ));
    }
    let mut perm: Vec<u8> = (0..num_classes as u8).collect();
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().all(|(i, &p)| p as usize != i) {
            return Ok(perm);
        }
    }
}

/// Stamp fresh per-image noise; per-image seeds derive from the build seed so
/// construction is parallelizable yet deterministic.
pub fn build_illegal(
    clean: &LabeledDataset,
    epsilon: i64,
    noise_type: NoiseType,
    label_mode: LabelMode,
    build_seed: u64,
) -> Result<LabeledDataset> {
    if !(0..=16).contains(&epsilon) {
        return Err(IsnnError::EpsilonOutOfRange(epsilon));
    }
    let s = clean.sample_len();
    let shape = clean.shape;
    let chunks: Vec<Result<Vec<u8>>> = exec::map_chunks(clean.len(), 256, |r| {
        let mut out = vec![0u8; r.len() * s];
        for (k, i) in r.enumerate() {
            let mut rng = chacha(per_index_seed(build_seed, i as u64));
            let noise = sample_noise(&mut rng, epsilon, noise_type, shape)?;
            noise.stamp(clean.image(i), &mut out[k * s..(k + 1) * s]);
        }
        Ok(out)
    });
    let mut images = Vec::with_capacity(clean.images.len());
    for c in chunks {
        images.extend_from_slice(&c?);
    }
    let mut ds =
        LabeledDataset::new(images, clean.labels.clone(), shape, DatasetKind::Illegal)?;
    ds.epsilon_used = epsilon as u8;
    ds.build_seed = build_seed;
    if label_mode == LabelMode::Li {
        let num_classes = clean.num_classes();
        let mut rng = chacha(per_index_seed(build_seed, u64::MAX));
        let perm = class_derangement(num_classes, &mut rng)?;
        ds.shuffled_labels = Some(clean.labels.iter().map(|&y| perm[y as usize]).collect());
    }
    Ok(ds)
}

/// The attacker's forgery: one fixed uniform perturbation for the whole set.
pub fn build_forged(clean: &LabeledDataset, epsilon: i64, seed: u64) -> Result<LabeledDataset> {
    let mut rng = chacha(seed);
    let mut delta_hat = sample_noise(&mut rng, epsilon, NoiseType::Uniform, clean.shape)?;
    delta_hat.origin = Origin::Forged;
    let s = clean.sample_len();
    let chunks = exec::map_chunks(clean.len(), 256, |r| {
        let mut out = vec![0u8; r.len() * s];
        for (k, i) in r.enumerate() {
            delta_hat.stamp(clean.image(i), &mut out[k * s..(k + 1) * s]);
        }
        out
    });
    let mut ds = LabeledDataset::new(
        chunks.concat(),
        clean.labels.clone(),
        clean.shape,
        DatasetKind::Forged,
    )?;
    ds.epsilon_used = epsilon as u8;
    ds.build_seed = seed;
    Ok(ds)
}
