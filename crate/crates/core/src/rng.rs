//! Seeded random streams.
//!
//! Every simulation draws from [`ChaCha8Rng`]. Its output is specified
//! bit-for-bit and independent of platform, so trajectories reproduce
//! everywhere. Independent runs use independent ChaCha streams of one key:
//! the key comes from the master seed and the stream id is the run index.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// The generator for run `index` under `master_seed`.
pub fn substream(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// The generator behind a bare seed (stream 0).
pub fn from_seed(seed: u64) -> ChaCha8Rng {
    substream(seed, 0)
}
