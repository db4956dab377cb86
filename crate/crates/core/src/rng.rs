//! Seeded random streams.
//!
//! Every stochastic routine in the crate draws from [`SeededRng`], a ChaCha8
//! stream keyed by a 64-bit seed. Independent trials get their own stream via
//! [`derive_seed`], so results do not depend on evaluation order or thread
//! count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator behind every seeded stream.
pub type SeededRng = ChaCha8Rng;

/// Identifier written into reports next to every seed.
pub const GENERATOR_ID: &str = "chacha8-v1 (rand_chacha 0.9, seed_from_u64; trial seeds splitmix64)";

/// Default seed used by the CLI and the verification suites.
pub const DEFAULT_SEED: u64 = 0x005E_EDD0_1170;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for trial `index` of a run keyed by `seed` (one SplitMix64 round over
/// the pair).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trial_rng(seed: u64, index: u64) -> SeededRng {
    rng_from_seed(derive_seed(seed, index))
}
