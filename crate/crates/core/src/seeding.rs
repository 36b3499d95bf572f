//! Stable, platform-independent hashing used for per-agent random draws.
//!
//! `std`'s `DefaultHasher` is not guaranteed stable across releases, so the
//! simulator derives every keyed draw from FNV-1a followed by a splitmix64
//! finaliser.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash of a string key mixed with a seed.
pub fn keyed_hash(key: &str, seed: u64) -> u64 {
    splitmix64(fnv1a(key.as_bytes()) ^ splitmix64(seed))
}

/// Uniform draw in `[0, 1)` from a keyed hash (53 high bits).
pub fn unit_draw(key: &str, seed: u64) -> f64 {
    to_unit(keyed_hash(key, seed))
}

/// Map a 64-bit hash onto `[0, 1)`.
pub fn to_unit(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Derive a child seed from a parent seed and a small tuple of counters.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, p| splitmix64(acc ^ p.wrapping_mul(FNV_PRIME)))
}
