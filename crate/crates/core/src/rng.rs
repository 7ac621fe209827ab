//! Reproducible random streams.
//!
//! Every chain, replication and fuzz case owns a ChaCha stream keyed by a
//! master seed and selected by an index, so parallel runs are bit-identical
//! to serial ones regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Root stream for a seed.
pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Child stream `index` of `master_seed`.
pub fn derive(master_seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}

/// Child seed, for APIs that take a plain `u64`.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = master_seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15_u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
