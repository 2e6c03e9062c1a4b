//! Seed handling. Every random choice in the crate flows from an explicit
//! `u64` seed through these helpers, so runs are reproducible bit-for-bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeedRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeedRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent stream seed (splitmix64 finalizer over seed/stream).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable content hash for seeding per-item streams (FNV-1a).
pub fn hash_units(units: &[u32]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &u in units {
        h ^= u as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
