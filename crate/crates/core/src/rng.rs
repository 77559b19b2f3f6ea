//! Seeded pseudo-random numbers with a fixed, portable algorithm.
//!
//! The generator is xoshiro256** whose 256-bit state is expanded from the
//! 64-bit seed with SplitMix64. Derived draws:
//!
//! * `uniform()`: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`.
//! * `normal()`: Box–Muller, `sqrt(-2 ln u1) * cos(2π u2)` with
//!   `u1 = 1 - uniform()` so that `u1 ∈ (0, 1]`. One uniform pair per draw;
//!   the sine branch is discarded.
//! * `below(n)`: `floor(uniform() * n)`.
//! * `shuffle`: Fisher–Yates from the last index down, using `below(i + 1)`.
//!
//! Any implementation following these rules reproduces the same streams.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: Xoshiro256StarStar,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream for a numbered component.
    pub fn derive(seed: u64, stream: u64) -> Self {
        Self::new(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n.saturating_sub(1))
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn known_first_outputs() {
        // xoshiro256** seeded through SplitMix64(0), checked against a
        // standalone implementation of both algorithms.
        let mut rng = Rng::new(0);
        assert_eq!(rng.next_u64(), 11091344671253066420);
        assert_eq!(rng.next_u64(), 13793997310169335082);
    }

    #[test]
    fn normal_moments() {
        let mut rng = Rng::new(7);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn uniform_range_and_shuffle_is_permutation() {
        let mut rng = Rng::new(3);
        for _ in 0..1000 {
            let u = rng.uniform_in(-1.0, 1.0);
            assert!((-1.0..1.0).contains(&u));
        }
        let mut v: Vec<usize> = (0..50).collect();
        rng.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_ne!(v, sorted);
    }
}
