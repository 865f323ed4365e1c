//! Counter-based random streams.
//!
//! Every random draw is addressed by `(seed, stream, index)`, so sample `i` of
//! a task sees the same numbers whatever the worker count or schedule.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream identifiers for the sampling tasks of the library.
pub mod streams {
    pub const GROUP_AXIOMS: u64 = 1;
    pub const TRIANGLE: u64 = 2;
    pub const EQUIVALENCE: u64 = 3;
    pub const PROJECTIONS: u64 = 4;
    pub const NORM_SPLITTING: u64 = 5;
    pub const QUASI_DISTANCE: u64 = 6;
    pub const MEASURE: u64 = 7;
    pub const CC_RESTARTS: u64 = 8;
    pub const LINEAR_CHECK: u64 = 9;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes the address of a draw into a single 64-bit key.
pub fn counter_key(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index)
}

/// Generator dedicated to sample `index` of `stream`.
pub fn sample_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(counter_key(seed, stream, index))
}
