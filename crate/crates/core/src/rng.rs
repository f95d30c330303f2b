//! The one random source used for sampling and scenario generation.
//!
//! Generator: xoshiro256** (Blackman & Vigna), state seeded from a `u64` by
//! drawing four outputs of SplitMix64 (increment `0x9E3779B97F4A7C15`,
//! finalizer multipliers `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`).
//!
//! Derived draws are fixed so fixtures can be reproduced in any language:
//!
//! - [`SeededRng::below`]: Lemire's widening-multiply method with rejection,
//!   exact uniform integers in `[0, n)`.
//! - [`SeededRng::unit`]: top 53 bits of one output times 2⁻⁵³, in `[0, 1)`.
//! - [`SeededRng::normal`]: Box–Muller, `sqrt(-2 ln(1-u1)) * cos(2π u2)`, two
//!   `unit` draws per variate (the sine branch is discarded).

use rand_xoshiro::rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: Xoshiro256StarStar,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    /// Derive an independent stream for a sub-task, keyed by `stream`.
    pub fn derive(seed: u64, stream: u64) -> Self {
        let mixed = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
        Self::new(mixed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let mut m = u128::from(self.next_u64()) * u128::from(n);
        let mut low = m as u64;
        if low < n {
            let threshold = n.wrapping_neg() % n;
            while low < threshold {
                m = u128::from(self.next_u64()) * u128::from(n);
                low = m as u64;
            }
        }
        (m >> 64) as u64
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.unit()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.unit();
        let u2 = self.unit();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher–Yates shuffle, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
