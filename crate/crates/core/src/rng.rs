//! Seed derivation for independent random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere in the crate.
pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th sub-stream of `seed`.
pub fn stream_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index ^ 0xA5A5_5A5A_C3C3_3C3C))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Generator for the `index`-th sub-stream of `seed`.
pub fn stream(seed: u64, index: u64) -> SimRng {
    rng_from_seed(stream_seed(seed, index))
}
