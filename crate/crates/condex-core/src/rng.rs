//! Seed derivation for deterministic, parallel-safe sampling.
//!
//! Every random decision in the pipeline draws from a [`ChaCha8Rng`] seeded
//! through [`derive_seed`], so workers can process objects in any order (or
//! in parallel) and still produce byte-identical artifacts.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; decorrelates nearby seed/salt pairs.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive a child seed from a base seed and a chain of salts.
pub fn derive_seed(base: u64, salts: &[u64]) -> u64 {
    let mut s = splitmix64(base);
    for &salt in salts {
        s = splitmix64(s ^ splitmix64(salt));
    }
    s
}

/// Deterministic RNG for a (base, salts) lineage.
pub fn rng_from(base: u64, salts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, salts))
}

/// Salt constants naming each independent random stream. Keeping them in one
/// place guarantees two subsystems never alias the same child seed lineage.
pub mod salts {
    pub const LETTER: u64 = 1;
    pub const BOTTLE: u64 = 2;
    pub const INSTANCE: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const GRASP: u64 = 5;
    pub const COLLECT: u64 = 6;
    pub const EPISODE: u64 = 7;
    pub const INIT: u64 = 8;
    pub const TRAIN: u64 = 9;
    pub const EVAL: u64 = 10;
    pub const ACCUMULATE: u64 = 11;
    pub const AUGMENT: u64 = 12;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        let a = derive_seed(7, &[1, 2]);
        let b = derive_seed(7, &[1, 2]);
        let c = derive_seed(7, &[2, 1]);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(derive_seed(7, &[]), derive_seed(8, &[]));
    }

    #[test]
    fn rng_streams_reproduce() {
        let mut r1 = rng_from(42, &[3]);
        let mut r2 = rng_from(42, &[3]);
        for _ in 0..16 {
            assert_eq!(r1.gen::<u64>(), r2.gen::<u64>());
        }
    }
}
