//! Small deterministic 64-bit mixers used for seed derivation and the
//! synthetic trainer's counter-mode noise. Stable across platforms and runs.

/// SplitMix64 finalizer.
pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a word into a running hash.
pub(crate) fn mix(state: u64, word: u64) -> u64 {
    splitmix64(state ^ word.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

/// FNV-1a over bytes, for string identities.
pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    hash
}

/// Maps a hash to a uniform value in [-1, 1).
pub(crate) fn unit_from_hash(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}
