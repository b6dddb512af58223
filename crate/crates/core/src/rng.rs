//! The single pseudo-random source used throughout the crate.
//!
//! Every stochastic routine draws from [`Rng`], a xoshiro256++ generator.
//! A `u64` seed is expanded into the 256-bit state with SplitMix64
//! (increment `0x9E3779B97F4A7C15`, mixing multipliers
//! `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`), so a seed fully
//! determines every draw on every platform.

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 output for state `x`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the `index`-th independent stream derived from `base`.
///
/// Used to give each image in a batch its own generator so that results do
/// not depend on processing order.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index.wrapping_mul(GOLDEN_GAMMA)))
}

/// Below this mean the Poisson sampler inverts the CDF; at or above it a
/// rounded Gaussian with matching mean and variance is used.
pub const POISSON_INVERSION_LIMIT: f64 = 30.0;

pub struct Rng(Xoshiro256PlusPlus);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }

    /// Poisson draw with mean `lambda`.
    ///
    /// Sequential CDF inversion for `lambda < 30`; `round(lambda + sqrt(lambda) z)`
    /// clamped at zero otherwise.
    pub fn poisson(&mut self, lambda: f64) -> u64 {
        if !(lambda > 0.0) {
            return 0;
        }
        if lambda < POISSON_INVERSION_LIMIT {
            let u = self.uniform();
            let mut k = 0u64;
            let mut p = (-lambda).exp();
            let mut cdf = p;
            while u >= cdf {
                k += 1;
                p *= lambda / k as f64;
                cdf += p;
                // the tail mass left is below f64 resolution
                if p == 0.0 && cdf < u {
                    break;
                }
            }
            k
        } else {
            let draw = lambda + lambda.sqrt() * self.normal();
            draw.round().max(0.0) as u64
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.0);
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
    fn derived_seeds_differ() {
        let seeds: Vec<u64> = (0..64).map(|i| derive_seed(7, i)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
    }

    #[test]
    fn splitmix_reference_value() {
        // first output of the reference SplitMix64 seeded with 0
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn poisson_zero_mean() {
        let mut rng = Rng::new(1);
        assert_eq!(rng.poisson(0.0), 0);
    }

    fn moments(lambda: f64, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = Rng::new(seed);
        let draws: Vec<f64> = (0..n).map(|_| rng.poisson(lambda) as f64).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (mean, var)
    }

    #[test]
    fn poisson_moments_within_five_standard_errors() {
        let n = 100_000;
        for &lambda in &[0.5, 4.0, 1000.0] {
            let (mean, var) = moments(lambda, n, 11);
            let se_mean = (lambda / n as f64).sqrt();
            // Var of the sample variance for Poisson: (mu4 - sigma^4 (n-3)/(n-1)) / n,
            // with mu4 = lambda (1 + 3 lambda).
            let mu4 = lambda * (1.0 + 3.0 * lambda);
            let se_var = ((mu4 - lambda * lambda * (n as f64 - 3.0) / (n as f64 - 1.0)) / n as f64).sqrt();
            assert!((mean - lambda).abs() < 5.0 * se_mean, "lambda {lambda}: mean {mean}");
            assert!((var - lambda).abs() < 5.0 * se_var, "lambda {lambda}: var {var}");
        }
    }
}
