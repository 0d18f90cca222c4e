//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha8 stream identified by a
//! `(seed, stream)` pair, so runs and trials are reproducible regardless of
//! how they are scheduled across threads.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Stream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Position of the generator inside its stream, in 32-bit words.
pub fn word_pos(rng: &ChaCha8Rng) -> u128 {
    rng.get_word_pos()
}
