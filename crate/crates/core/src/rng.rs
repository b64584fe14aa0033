//! Seeded random streams.
//!
//! All randomness in the crate flows through [`SeededRng`], a
//! xoshiro256++ generator whose state is expanded from a 64-bit seed with
//! SplitMix64. Both algorithms are fixed and documented (Blackman & Vigna),
//! so a seed pins every shuffle, split and initialization bit for bit.
//! Derived streams (per trial, per device, per epoch) are obtained with
//! [`derive_seed`], one SplitMix64 step over `seed ^ index`-mixed input.

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

/// One SplitMix64 output step.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th child stream of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5EED)))
}

#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: Xoshiro256PlusPlus,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn child(seed: u64, index: u64) -> Self {
        Self::new(derive_seed(seed, index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Index in `0..n`; `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        (self.inner.next_u64() % n as u64) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Geometric waiting time with the given mean, at least 1.
    pub fn duration(&mut self, mean: f64) -> usize {
        if mean <= 1.0 {
            return 1;
        }
        let p = 1.0 / mean;
        let u: f64 = self.inner.random::<f64>().max(f64::MIN_POSITIVE);
        (u.ln() / (1.0 - p).ln()).ceil().max(1.0) as usize
    }

    /// Fisher-Yates shuffle driven by [`SeededRng::index`].
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }
}
