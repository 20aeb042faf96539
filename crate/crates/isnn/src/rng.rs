//! Deterministic seed derivation.
//!
//! Per-item seeds come from the SplitMix64 mixing function applied to
//! `base_seed XOR index`, which keeps dataset construction parallelizable
//! while staying reproducible. Heavier sampling is done with ChaCha8 streams
//! seeded from those values.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer: one full mixing step of the SplitMix64 generator.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th item of a run rooted at `base_seed`.
pub fn per_index_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(base_seed ^ index)
}

/// ChaCha8 stream for one derived seed.
pub fn chacha(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for a named sub-stream (attack RNG lives in a different namespace
/// than defender RNG so the two never share a stream).
pub fn namespaced_seed(base_seed: u64, namespace: &str) -> u64 {
    let mut h = base_seed;
    for &b in namespace.as_bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    h
}
