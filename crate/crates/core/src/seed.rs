//! Deterministic seed derivation.
//!
//! Every random stream in a run is keyed by a path of integer tags hanging
//! off the experiment seed, so results never depend on scheduling order.

use rand::rngs::SmallRng;
use rand::SeedableRng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold `tags` into `base`, one mixing round per tag.
pub fn derive(base: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(base.wrapping_add(GOLDEN)), |acc, &t| {
        mix(acc ^ mix(t.wrapping_add(GOLDEN)))
    })
}

pub fn rng(base: u64, tags: &[u64]) -> SmallRng {
    SmallRng::seed_from_u64(derive(base, tags))
}

// stream tags
pub const TAG_GRAPH: u64 = 1;
pub const TAG_DEMAND: u64 = 2;
pub const TAG_LIFE: u64 = 3;
pub const TAG_SYNC: u64 = 4;
pub const TAG_SLOT: u64 = 5;
pub const TAG_PAIRS: u64 = 6;
