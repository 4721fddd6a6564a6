//! Deterministic RNG stream derivation.
//!
//! Every randomized operation in the crate derives its own ChaCha8 stream from
//! `(user seed, stream tag, index)` through splitmix64, so that independent
//! consumers (model init, corruption, splitting, the two samplers, ...) never
//! share or perturb each other's sequences. This is what makes the uniform
//! baseline and the frozen-weight trainer consume identical train batches.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

pub(crate) const TAG_MODEL_INIT: u64 = 1;
pub(crate) const TAG_CORRUPT: u64 = 2;
pub(crate) const TAG_SPLIT: u64 = 3;
pub(crate) const TAG_TRAIN_SAMPLER: u64 = 4;
pub(crate) const TAG_FAIR_SAMPLER: u64 = 5;
pub(crate) const TAG_RANDOM_WEIGHTS: u64 = 6;
pub(crate) const TAG_SYNTHETIC: u64 = 7;
pub(crate) const TAG_DIGITS: u64 = 8;
pub(crate) const TAG_SUBSET: u64 = 9;

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent ChaCha8 stream for `(seed, tag, index)`.
pub(crate) fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let h = splitmix64(splitmix64(splitmix64(seed) ^ tag) ^ index);
    ChaCha8Rng::seed_from_u64(h)
}
