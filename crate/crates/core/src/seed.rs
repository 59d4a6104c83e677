//! Seed derivation for independent RNG streams.
//!
//! Every parallel task (a direction of a contour, a replication of an
//! experiment cell) gets its own generator seeded by
//! `derive_seed(master, &[index, ...])`. The rule folds each index into the
//! state with one SplitMix64 finalizer round:
//!
//! ```text
//! s₀ = mix(master)
//! sⱼ = mix(sⱼ₋₁ ⊕ (indexⱼ + 0x9E3779B97F4A7C15·(j+1)))
//! ```
//!
//! so the stream of task `i` does not depend on how many other tasks run or in
//! which order they finish.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used by every sampler in the crate.
pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, indices: &[u64]) -> u64 {
    let mut state = mix(master);
    for (j, &idx) in indices.iter().enumerate() {
        let salt = GOLDEN.wrapping_mul(j as u64 + 1);
        state = mix(state ^ idx.wrapping_add(salt));
    }
    state
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
