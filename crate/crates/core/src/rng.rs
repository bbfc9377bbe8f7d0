//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded from a 64-bit value, so results are identical across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for stream `index` under `seed`; independent of how many
/// siblings are derived.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

/// Child seed for a named purpose (e.g. "augment", "shuffle").
pub fn derive_named(seed: u64, name: &str) -> u64 {
    name.bytes().fold(mix64(seed), |acc, b| mix64(acc ^ b as u64))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_are_distinct() {
        let s: std::collections::HashSet<u64> = (0..10_000).map(|i| derive_seed(7, i)).collect();
        assert_eq!(s.len(), 10_000);
        assert_ne!(derive_named(1, "a"), derive_named(1, "b"));
    }
}
