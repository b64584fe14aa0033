//! Seeded weight initializers.

use crate::rng::SeededRng;

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(rng: &mut SeededRng, len: usize, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.uniform_range(-bound, bound)).collect()
}

/// Uniform in `±1/sqrt(hidden)`.
pub fn lstm_uniform(rng: &mut SeededRng, len: usize, hidden: usize) -> Vec<f64> {
    let bound = 1.0 / (hidden as f64).sqrt();
    (0..len).map(|_| rng.uniform_range(-bound, bound)).collect()
}
