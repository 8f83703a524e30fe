//! Stable seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a `u64`,
//! and sub-streams are derived by mixing a parent seed with small integer
//! tags. The mix is SplitMix64, so results do not depend on platform word
//! order or on the order in which work units are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `base`. Different part lists give unrelated seeds, and
/// appending a new axis value never changes the seeds of existing ones.
pub fn derive(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(base), |h, &p| {
        splitmix64(h ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019)))
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
