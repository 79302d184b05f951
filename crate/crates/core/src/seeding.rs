//! Deterministic seed derivation.
//!
//! Every randomized stage derives its own stream from the master seed and a
//! stable salt (fold index, model id hash, tree index, ...) so that adding or
//! removing one consumer never shifts another's random sequence.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; full-period scrambling of a 64-bit state.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a salt into a seed, producing a new independent seed.
pub fn derive(seed: u64, salt: u64) -> u64 {
    splitmix64(seed.rotate_left(17) ^ splitmix64(salt))
}

/// Mix two salts (e.g. fold index and a per-system hash).
pub fn derive2(seed: u64, salt_a: u64, salt_b: u64) -> u64 {
    derive(derive(seed, salt_a), salt_b)
}

/// Stable 64-bit FNV-1a hash of a string, for salting by identifier.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// RNG used throughout the crate; seeded from a derived u64.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
