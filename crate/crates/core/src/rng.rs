//! Seeding helpers. Every random stream in the crate is a ChaCha8 generator
//! seeded from a `u64`, so results are reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const CHAIN_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Seed for chain `chain` of a run started with `seed`.
pub fn chain_seed(seed: u64, chain: usize) -> u64 {
    seed.wrapping_add((chain as u64).wrapping_mul(CHAIN_STRIDE))
}

/// Mixes a base seed with a stream label (document index, grid cell, ...).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_add(CHAIN_STRIDE).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
