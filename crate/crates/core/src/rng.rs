//! Seeded random streams.
//!
//! Every random draw in the crate goes through an explicit [`TrialRng`]
//! (ChaCha8, a counter-based generator). Independent streams are obtained by
//! hashing a master seed together with a path of indices, e.g.
//! `derive_seed(master, &[m, trial])`, so results never depend on the order
//! in which trials are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TrialRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash `master` and an index path into a child seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for (depth, &p) in path.iter().enumerate() {
        h = splitmix64(h ^ splitmix64(p.wrapping_add((depth as u64) << 56)));
    }
    h
}

pub fn rng_from_seed(seed: u64) -> TrialRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derive_rng(master: u64, path: &[u64]) -> TrialRng {
    rng_from_seed(derive_seed(master, path))
}
