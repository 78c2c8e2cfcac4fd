//! Seed derivation. All randomness in a run flows from one 64-bit seed split into
//! independent streams by tag, so a stream never depends on how often another
//! stream was consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Values are part of the reproducibility contract; never reorder.
pub mod stream {
    pub const GRADIENT: u64 = 0x01;
    pub const COMPUTE_TIME: u64 = 0x02;
    pub const NETWORK: u64 = 0x03;
    pub const DATASET: u64 = 0x04;
    pub const MATRIX: u64 = 0x05;
    pub const EVENT_LOG: u64 = 0x06;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `base` with an ordered list of tags into a new 64-bit seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Seed for the stochastic gradient node `node` computes at its local step `step`.
pub fn gradient_seed(run_seed: u64, node: usize, step: u64) -> u64 {
    derive_seed(run_seed, &[stream::GRADIENT, node as u64, step])
}

pub fn stream_rng(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}
