//! Seeded random number generation.
//!
//! Every stochastic operation takes an explicit `u64` seed. Independent
//! sub-streams of one seed are obtained with [`stream`], so adding a new
//! consumer never perturbs the draws of an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for sub-stream `stream` of `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
