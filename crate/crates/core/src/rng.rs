//! Seed derivation.
//!
//! Every stochastic step draws from a `ChaCha8Rng` seeded with a 64-bit value.
//! Child seeds are derived from a parent seed and a sequence of integer tags
//! by folding each tag through the SplitMix64 finalizer:
//!
//! ```text
//! s = parent
//! for tag in tags: s = splitmix64(s ^ splitmix64(tag + GOLDEN))
//! ```
//!
//! The derivation depends only on the parent and the tags, so e.g. the seed
//! for repeat `r` does not change when more repeats are requested.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(parent, |s, &t| {
        splitmix64(s ^ splitmix64(t.wrapping_add(GOLDEN)))
    })
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags used across the crate, so call sites stay readable.
pub mod tags {
    pub const SPLIT: u64 = 1;
    pub const CHALLENGE: u64 = 2;
    pub const TARGET_INIT: u64 = 3;
    pub const TARGET_FL: u64 = 4;
    pub const ATTACK: u64 = 5;
    pub const PARTITION: u64 = 6;
    pub const CLIENT: u64 = 7;
    pub const EPOCH: u64 = 8;
    pub const SHADOW_SPLIT: u64 = 9;
    pub const SHADOW_INIT: u64 = 10;
    pub const SHADOW_TRAIN: u64 = 11;
    pub const ATTACK_INIT: u64 = 12;
    pub const ATTACK_TRAIN: u64 = 13;
    pub const REPEAT: u64 = 14;
    pub const MEMBERS: u64 = 15;
    pub const NONMEMBERS: u64 = 16;
    pub const SHUFFLE: u64 = 17;
}
