//! Counter-based random number streams.
//!
//! Every consumer of randomness receives its own stream derived from a
//! master seed and a stream counter. Parallel execution therefore cannot
//! change any result: stream `k` produces the same draws no matter which
//! thread runs it or in which order.

use rand::SeedableRng;

/// The generator used throughout the crate.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Independent generator for stream `stream` under `master_seed`.
pub fn stream_rng(master_seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}
