//! Derived random streams.
//!
//! Every random decision in a session is drawn from a generator seeded by
//! `(seed, purpose, index)`, so a run can be resumed from a saved state
//! without persisting generator internals.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Split = 1,
    Synthetic = 2,
    InitialDisplay = 3,
    KMeans = 4,
    Random = 5,
    Bandit = 6,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, purpose: Stream, index: u64) -> ChaCha8Rng {
    let mixed = splitmix(splitmix(splitmix(seed) ^ purpose as u64) ^ index);
    ChaCha8Rng::seed_from_u64(mixed)
}
