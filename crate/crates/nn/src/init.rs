use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

/// Half-width `√(6 / (fan_in + fan_out))` of the Xavier uniform law.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// `len` draws from `U(−b, b)` with `b = xavier_bound(fan_in, fan_out)`.
pub fn xavier_uniform<T: Scalar>(
    len: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut impl Rng,
) -> Vec<T> {
    assert!(fan_in >= 1 && fan_out >= 1, "fans must be >= 1");
    let b = xavier_bound(fan_in, fan_out);
    (0..len).map(|_| T::of(rng.random_range(-b..=b))).collect()
}

/// Deterministic [`xavier_uniform`] from a seed.
pub fn xavier_init<T: Scalar>(len: usize, fan_in: usize, fan_out: usize, seed: u64) -> Vec<T> {
    xavier_uniform(len, fan_in, fan_out, &mut ChaCha8Rng::seed_from_u64(seed))
}
