//! Seed derivation for reproducible, order-independent parallel work.
//!
//! Every unit of parallel work (a synthesized sample, a Monte-Carlo
//! iteration, a sweep cell) gets its own RNG seeded from
//! `derive(parent, index)`, so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `sample_seed = hash(parent, index)`: the SplitMix64 finalizer applied to
/// `parent` and then to the golden-ratio-offset index folded into it.
pub fn derive(parent: u64, index: u64) -> u64 {
    mix64(mix64(parent) ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
