//! Deterministic seed derivation.
//!
//! Every stochastic component owns a ChaCha stream seeded through the mixing
//! functions below, so that runs are reproducible bit-for-bit and no two
//! components ever share a stream by accident. The derivation rule is part of
//! the run manifest: `detector_seed = splitmix64(splitmix64(base ^
//! fnv1a64(dataset)) ^ fnv1a64(detector))`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; decorrelates nearby integer seeds.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a hash of a label, used to bind seeds to component names.
pub fn fnv1a64(label: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for byte in label.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Derives an independent seed for a named component of a run.
pub fn derive_seed(base: u64, labels: &[&str]) -> u64 {
    let mut state = splitmix64(base);
    for label in labels {
        state = splitmix64(state ^ fnv1a64(label));
    }
    state
}

/// The deterministic RNG used throughout the crate.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
