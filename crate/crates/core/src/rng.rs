//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator whose 64-bit seed is derived from a
//! master seed and a list of integer labels by folding them through the
//! SplitMix64 finaliser:
//!
//! ```text
//! h = mix(seed); for l in labels { h = mix(h ^ mix(l + 0x9E3779B97F4A7C15)) }
//! ```
//!
//! The derivation is order-sensitive and independent of thread scheduling, so
//! a given (seed, labels) pair always produces the same draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(splitmix64(seed), |h, &l| {
        splitmix64(h ^ splitmix64(l.wrapping_add(GOLDEN)))
    })
}

pub fn stream(seed: u64, labels: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, labels))
}
