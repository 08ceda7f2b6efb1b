//! Seeded, index-addressable random streams.
//!
//! Every parallel task draws from `stream(seed, index)`, so results depend
//! only on the seed and the task index, never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(index);
    r
}
