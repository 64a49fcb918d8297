//! Deterministic derivation of child RNG seeds from a master seed.

/// Mixes a master seed and a stream index into an independent child seed
/// (splitmix64 finalizer). Consecutive indices give uncorrelated streams,
/// so parallel replications stay reproducible regardless of scheduling.
pub(crate) fn splitmix64(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::splitmix64;

    #[test]
    fn distinct_streams() {
        let a = splitmix64(42, 0);
        let b = splitmix64(42, 1);
        let c = splitmix64(43, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        // stable across runs
        assert_eq!(a, splitmix64(42, 0));
    }
}
