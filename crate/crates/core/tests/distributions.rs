//! Every pmf against an independent brute-force oracle, on randomized
//! parameter points, compared on the probability scale.

mod common;

use common::oracles;
use common::poisson_table;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rt_pmcmc::model::special::{binomial_ln_pmf, neg_binomial_ln_pmf};
use rt_pmcmc::model::{coal_slice_ln_pmf, folded_normal_ln_pdf, pairs, skellam_ln_pmf};

const POINTS: usize = 250;
const TOL: f64 = 1e-10;

#[test]
fn skellam_matches_convolution() {
    let err = oracles::skellam_error(POINTS, 11);
    assert!(err < TOL, "{err}");
}

#[test]
fn skellam_reference_point() {
    let p1 = poisson_table(2.0, 200);
    let p2 = poisson_table(1.0, 200);
    let oracle: f64 = (0..199).map(|j| p1[j + 1] * p2[j]).sum();
    assert!((skellam_ln_pmf(1, 2.0, 1.0).exp() - oracle).abs() < 1e-12);
}

#[test]
fn skellam_symmetry_and_large_arguments() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let a = rng.random_range(0.0..1e3);
        let b = rng.random_range(0.0..1e3);
        let k: i64 = rng.random_range(-500..=500);
        assert_eq!(skellam_ln_pmf(k, a, b), skellam_ln_pmf(-k, b, a));
    }
    let v = skellam_ln_pmf(0, 1e5, 1e5);
    assert!(v.is_finite());
    // Normal approximation with variance 2e5.
    let approx = -0.5 * (2.0 * std::f64::consts::PI * 2e5).ln();
    assert!((v - approx).abs() < 1e-4);
    assert!(skellam_ln_pmf(1_000_000, 1e6, 1e6).is_finite());
    assert!(skellam_ln_pmf(-1_000_000, 1e6, 1e6).is_finite());
}

#[test]
fn skellam_normalizes() {
    for &(mu1, mu2) in &[(0.3, 0.1), (3.0, 1.0), (30.0, 40.0), (0.0, 5.0)] {
        let total: f64 = (-400..=400).map(|k| skellam_ln_pmf(k, mu1, mu2).exp()).sum();
        assert!((total - 1.0).abs() < 1e-8, "{mu1} {mu2}: {total}");
    }
}

#[test]
fn binomial_matches_combinatorics() {
    let err = oracles::binomial_error(POINTS, 13);
    assert!(err < TOL, "{err}");
    assert!((binomial_ln_pmf(5, 10, 0.5) - (252.0f64 / 1024.0).ln()).abs() < 1e-14);
}

#[test]
fn negative_binomial_matches_product_form() {
    let err = oracles::negative_binomial_error(POINTS, 14);
    assert!(err < TOL, "{err}");
}

#[test]
fn negative_binomial_normalizes_for_real_size() {
    for &(r, p) in &[(0.56, 0.1), (514.14, 0.9), (1.0, 0.3)] {
        let total: f64 = (0..20_000).map(|k| neg_binomial_ln_pmf(k, r, p).exp()).sum();
        assert!((total - 1.0).abs() < 1e-8, "{r} {p}: {total}");
    }
}

#[test]
fn folded_normal_matches_direct_density() {
    let err = oracles::folded_normal_error(POINTS, 15);
    assert!(err < TOL, "{err}");
    assert_eq!(folded_normal_ln_pdf(-0.5, 0.2, 0.1), f64::NEG_INFINITY);
}

#[test]
fn folded_normal_integrates_to_one() {
    // Composite Simpson on [0, 1], far beyond the mass of N(0.3, 0.05²).
    let n = 20_000;
    let h = 1.0 / n as f64;
    let f = |x: f64| folded_normal_ln_pdf(x, 0.3, 0.05).exp();
    let mut s = f(0.0) + f(1.0);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    assert!((s * h / 3.0 - 1.0).abs() < 1e-8);
}

#[test]
fn coalescent_slice_matches_combinatorics() {
    let err = oracles::coalescent_slice_error(POINTS, 16);
    assert!(err < TOL, "{err}");
}

#[test]
fn coalescent_slice_reference_and_normalization() {
    let p: f64 = 1.0 - (-0.06f64).exp();
    let expected = (15.0 * p * p * (1.0 - p).powi(4)).ln();
    assert!((coal_slice_ln_pmf(4, 2, 0.3, 10).unwrap() - expected).abs() < 1e-12);
    let total: f64 = (0..=pairs(7)).map(|c| coal_slice_ln_pmf(7, c, 0.4, 12).unwrap().exp()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert_eq!(coal_slice_ln_pmf(3, 1, 0.3, 2).unwrap(), f64::NEG_INFINITY);
    assert!(coal_slice_ln_pmf(3, 4, 0.3, 10).is_err());
}
