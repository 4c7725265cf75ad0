//! Seeded random sub-streams.
//!
//! Every random draw in a run comes from a ChaCha stream selected by
//! `(seed, purpose, index)`, so parallel or reordered work sees the same
//! numbers as a serial run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    FirstView = 2,
    SecondView = 3,
    Membership = 4,
    Split = 5,
    Probe = 6,
    KMeans = 7,
    Misc = 8,
}

/// Independent stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) ^ index);
    rng
}
