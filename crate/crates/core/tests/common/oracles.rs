//! Brute-force reference values for every pmf, on randomized parameter
//! points. Each check returns the largest absolute difference on the
//! probability scale.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rt_pmcmc::model::special::{binomial_ln_pmf, neg_binomial_ln_pmf};
use rt_pmcmc::model::{coal_slice_ln_pmf, folded_normal_ln_pdf, pairs, skellam_ln_pmf};

use super::poisson_table;

pub fn choose(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Skellam against the convolution of two Poisson tables.
pub fn skellam_error(points: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let mu1 = rng.random_range(0.01..50.0);
        let mu2 = rng.random_range(0.01..50.0);
        let k: i64 = rng.random_range(-40..=40);
        let len = 400;
        let (p1, p2) = (poisson_table(mu1, len), poisson_table(mu2, len));
        // P(B - D = k) = Σ_d P(B = d + k) P(D = d)
        let oracle: f64 = (0..len)
            .filter_map(|d| {
                let b = d as i64 + k;
                (b >= 0 && (b as usize) < len).then(|| p1[b as usize] * p2[d])
            })
            .sum();
        worst = worst.max((skellam_ln_pmf(k, mu1, mu2).exp() - oracle).abs());
    }
    worst
}

pub fn binomial_error(points: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let n: u64 = rng.random_range(0..=120);
        let k: u64 = rng.random_range(0..=n);
        let p: f64 = rng.random_range(0.001..1.0);
        let oracle = choose(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
        worst = worst.max((binomial_ln_pmf(k, n, p).exp() - oracle).abs());
    }
    worst
}

/// Real-size negative binomial against Γ(k+r)/(k! Γ(r)) built as a running product.
pub fn negative_binomial_error(points: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let r: f64 = rng.random_range(0.05..50.0);
        let p: f64 = rng.random_range(0.02..1.0);
        let k: u64 = rng.random_range(0..200);
        let coef = (0..k).fold(1.0, |acc, j| acc * (r + j as f64) / (j + 1) as f64);
        let oracle = coef * p.powf(r) * (1.0 - p).powi(k as i32);
        worst = worst.max((neg_binomial_ln_pmf(k, r, p).exp() - oracle).abs());
    }
    worst
}

pub fn folded_normal_error(points: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let mu: f64 = rng.random_range(-1.0..1.0);
        let sigma: f64 = rng.random_range(0.05..2.0);
        let x: f64 = rng.random_range(0.0..3.0);
        let oracle = (phi((x - mu) / sigma) + phi((x + mu) / sigma)) / sigma;
        worst = worst.max((folded_normal_ln_pdf(x, mu, sigma).exp() - oracle).abs());
    }
    worst
}

/// Coalescences in a slice: binomial over lineage pairs with the
/// per-pair probability 1 - exp(-2β/x), by direct combinatorics.
pub fn coalescent_slice_error(points: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let a: u64 = rng.random_range(0..=15);
        let n = pairs(a);
        let c: u64 = rng.random_range(0..=n);
        let x: u64 = rng.random_range(a.max(1)..200);
        let beta: f64 = rng.random_range(0.01..2.0);
        let oracle = if a < 2 {
            if c == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            let p = 1.0 - (-2.0 * beta / x as f64).exp();
            choose(n, c) * p.powi(c as i32) * (1.0 - p).powi((n - c) as i32)
        };
        worst = worst.max((coal_slice_ln_pmf(a, c, beta, x).unwrap().exp() - oracle).abs());
    }
    worst
}
