//! Deterministic seeding.
//!
//! Every Monte-Carlo loop derives one generator per sample index from a base
//! seed, so results do not depend on iteration order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a sample index into an independent child seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Generator for sample `index` under `base`.
pub fn rng_for(base: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(base, index))
}

/// Generator seeded directly from `seed`.
pub fn rng_from(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
