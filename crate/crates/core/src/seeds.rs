//! Counter-based seed derivation so that per-trial streams are independent of
//! scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `(seed, stream, index)`.
///
/// `stream` separates purposes (sampling, noise, direction search...) and
/// `index` is the trial counter.
pub fn derive(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)) ^ index)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named streams used throughout the crate.
pub mod stream {
    pub const SAMPLE: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const DIRECTION: u64 = 3;
    pub const SELECTION: u64 = 4;
    pub const TRIAL: u64 = 5;
    pub const AUDIT: u64 = 6;
}
