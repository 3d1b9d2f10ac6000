//! Stable 64-bit FNV-1a hashing.
//!
//! Used wherever a hash must be identical across runs, platforms and compiler
//! releases (token bucketing, per-example RNG streams). `std`'s `DefaultHasher`
//! makes no such promise.

const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over `bytes`, continuing from `state`.
pub fn fnv1a_extend(mut state: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        state ^= u64::from(b);
        state = state.wrapping_mul(PRIME);
    }
    state
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    fnv1a_extend(OFFSET, bytes)
}

/// Hash of `seed` (little-endian) followed by `bytes`.
pub fn seeded(seed: u64, bytes: &[u8]) -> u64 {
    fnv1a_extend(fnv1a(&seed.to_le_bytes()), bytes)
}
