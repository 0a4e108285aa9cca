//! Seeding conventions.
//!
//! Every random draw in the crate comes from a `ChaCha8Rng` (the ChaCha
//! stream cipher reduced to 8 rounds, as implemented by `rand_chacha`), whose
//! output stream is fixed by its 64-bit seed on every platform. Child seeds are
//! derived from a parent seed and a path of integers with the SplitMix64
//! finalizer, so that fold-level or iteration-level work can run in any order
//! and still draw the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a path of stream identifiers.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}
