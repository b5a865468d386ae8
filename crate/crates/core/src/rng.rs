//! Seeded random streams.
//!
//! Every randomized computation draws from `ChaCha8Rng` seeded with the user seed and a
//! stream id. Run `r` of a Monte-Carlo study uses stream `2r` for its dataset and stream
//! `2r + 1` for its permutations, so results never depend on how runs are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream for the data of run `run`.
pub fn dataset_stream(seed: u64, run: u64) -> Rng {
    stream(seed, 2 * run)
}

/// Stream for the permutations of run `run`.
pub fn permutation_stream(seed: u64, run: u64) -> Rng {
    stream(seed, 2 * run + 1)
}
