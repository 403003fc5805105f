//! Seedable, splittable random streams.
//!
//! Every stochastic task derives its generator from a master seed and a
//! stream index, so replicates (and restarts, folds, permutations inside
//! them) produce identical results whether executed sequentially or
//! concurrently.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Counter-based generator with an independent stream per task index.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Fold a master seed with tag words into a derived sub-seed (SplitMix64
/// finalizer per word). Used where an operation takes a bare seed rather
/// than a generator.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut state = master;
    for &p in parts {
        state = splitmix64(state ^ splitmix64(p));
    }
    state
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
