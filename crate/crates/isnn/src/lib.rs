//! Input-sensitive neural networks (ISNN).
//!
//! A classifier is trained so that it answers correctly only on inputs stamped
//! with a key-derived perturbation; every other input (clean images included)
//! is driven away from the true labels. The crate bundles the full pipeline:
//! a small f64 CNN engine with backprop, key generation and perturbation
//! derivation, dataset construction, the two training objectives, an adversary
//! harness (retraining, copyright forging, universal perturbation search) and
//! an evaluation / ownership-verification suite.

pub mod attacks;
pub mod datapipe;
pub mod error;
pub mod evaluator;
pub mod exec;
pub mod keying;
pub mod nn;
pub mod pgm;
pub mod plot;
pub mod rng;
pub mod trainer;

pub use error::IsnnError;
