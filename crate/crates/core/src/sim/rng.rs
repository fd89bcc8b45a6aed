use rand_chacha::rand_core::RngCore;

/// Uniform in `[0, n)` by multiply-high; `n = 0` yields 0.
pub(crate) fn below(rng: &mut impl RngCore, n: u64) -> u64 {
    ((u128::from(rng.next_u64()) * u128::from(n)) >> 64) as u64
}
