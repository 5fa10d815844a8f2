//! Reproducible per-path random streams.
//!
//! Every Monte Carlo path draws from its own ChaCha8 stream keyed by
//! `(seed, path_index)`: the seed fixes the key and the path index selects the
//! ChaCha stream word, so streams never overlap and the mapping from path to
//! stream does not depend on how paths are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

/// A deterministic random stream for one simulation path.
#[derive(Clone, Debug)]
pub struct RandomStream {
    inner: ChaCha8Rng,
}

/// Stream for path `path_index` of an experiment seeded with `seed`.
pub fn rng_stream(seed: u64, path_index: u64) -> RandomStream {
    let mut inner = ChaCha8Rng::seed_from_u64(seed);
    inner.set_stream(path_index);
    RandomStream { inner }
}

impl RandomStream {
    /// Derive an independent sub-stream, e.g. to keep the chain path fixed while
    /// varying the Brownian drivers. The child is keyed by a draw from the parent.
    pub fn fork(&mut self, label: u64) -> RandomStream {
        let key: u64 = self.inner.random();
        let mut inner = ChaCha8Rng::seed_from_u64(key ^ label.rotate_left(17));
        inner.set_stream(label);
        RandomStream { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform on `(0, 1]`, safe to take logarithms of.
    pub fn uniform_open0(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Exponential variate with the given rate; infinite when the rate is zero.
    pub fn exponential(&mut self, rate: f64) -> f64 {
        if rate <= 0.0 {
            return f64::INFINITY;
        }
        let e: f64 = Exp1.sample(&mut self.inner);
        e / rate
    }

    pub fn coin(&mut self) -> bool {
        self.inner.random::<bool>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_and_index_repeat() {
        let mut a = rng_stream(42, 7);
        let mut b = rng_stream(42, 7);
        let xs: Vec<u64> = (0..64).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..64).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn adjacent_indices_differ() {
        let mut a = rng_stream(42, 0);
        let mut b = rng_stream(42, 1);
        let xs: Vec<u64> = (0..8).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn adjacent_streams_uncorrelated() {
        let n = 1_000_000;
        let mut a = rng_stream(2024, 0);
        let mut b = rng_stream(2024, 1);
        let (mut sxy, mut sxx, mut syy, mut sx, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = a.normal();
            let y = b.normal();
            sx += x;
            sy += y;
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let nf = n as f64;
        let cov = sxy / nf - (sx / nf) * (sy / nf);
        let rho = cov / ((sxx / nf - (sx / nf).powi(2)) * (syy / nf - (sy / nf).powi(2))).sqrt();
        assert!(rho.abs() < 0.005, "rho = {rho}");
    }

    #[test]
    fn exponential_zero_rate_is_infinite() {
        let mut s = rng_stream(1, 1);
        assert!(s.exponential(0.0).is_infinite());
    }
}
