//! Seeded random streams.
//!
//! Every random quantity in the crate is drawn from a [`SimRng`] created from
//! an explicit `u64` seed. Child streams are derived with a counter-based
//! split, so the seed of stream `i` does not depend on how many values other
//! streams consumed or in which order they were run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of child stream `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix(mix(master).wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// Seed of a named child stream; `tag` separates unrelated consumers that
/// share an index space (scene generation vs. sampling, for instance).
pub fn derive_tagged(master: u64, tag: &str, index: u64) -> u64 {
    let tag_hash = tag
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    derive_seed(master ^ mix(tag_hash), index)
}
