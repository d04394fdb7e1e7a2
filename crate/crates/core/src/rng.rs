//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit `u64` seed and builds a
//! [`ChaCha8Rng`] from it, so results are reproducible across platforms.
//! Sweeps derive one seed per grid point with [`derive_seed`].

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a grid index into a base seed (golden-ratio offset followed by a splitmix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
