//! Log-space building blocks for discrete probability mass functions.
//!
//! Poisson, binomial and negative binomial masses use Loader's saddle-point
//! decomposition (Stirling error plus deviance term), which keeps the
//! relative error near machine precision even for large counts where the
//! naive `lgamma` differences lose several digits.

use std::f64::consts::PI;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Natural log of the gamma function.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Numerically stable `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `log(sum(exp(v)))`, returning `-inf` for an empty slice or all `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Stirling series error `ln Γ(n+1) - [(n+½) ln n - n + ln √(2π)]`.
pub fn stirling_error(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;

    if n <= 0.0 {
        return 0.0;
    }
    if n <= 15.0 {
        return ln_gamma(n + 1.0) - (n + 0.5) * n.ln() + n - LN_SQRT_2PI;
    }
    let nn = n * n;
    if n > 500.0 {
        return (S0 - S1 / nn) / n;
    }
    if n > 80.0 {
        return (S0 - (S1 - S2 / nn) / nn) / n;
    }
    if n > 35.0 {
        return (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n;
    }
    (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
}

/// Deviance term `x ln(x/np) + np - x`, evaluated without cancellation
/// when `x` is close to `np`.
pub fn deviance_term(x: f64, np: f64) -> f64 {
    if !x.is_finite() || !np.is_finite() || np == 0.0 {
        return f64::NAN;
    }
    if (x - np).abs() < 0.1 * (x + np) {
        let v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        if s.abs() < f64::MIN_POSITIVE {
            return s;
        }
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        return s;
    }
    x * (x / np).ln() + np - x
}

/// `log Poisson(k; lambda)`.
pub fn poisson_ln_pmf(k: u64, lambda: f64) -> f64 {
    if lambda < 0.0 || lambda.is_nan() {
        return f64::NAN;
    }
    if lambda == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if !lambda.is_finite() {
        return f64::NEG_INFINITY;
    }
    if k == 0 {
        return -lambda;
    }
    let x = k as f64;
    -stirling_error(x) - deviance_term(x, lambda) - 0.5 * (2.0 * PI * x).ln()
}

/// `log Binomial(x; n, p)` with `q = 1 - p` supplied separately so callers
/// can pass an accurately computed complement. `n` may be real-valued.
pub fn binomial_ln_pmf_raw(x: f64, n: f64, p: f64, q: f64) -> f64 {
    if p == 0.0 {
        return if x == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if q == 0.0 {
        return if x == n { 0.0 } else { f64::NEG_INFINITY };
    }
    if x == 0.0 {
        if n == 0.0 {
            return 0.0;
        }
        return if p < 0.1 {
            -deviance_term(n, n * q) - n * p
        } else {
            n * q.ln()
        };
    }
    if x == n {
        return if q < 0.1 {
            -deviance_term(n, n * p) - n * q
        } else {
            n * p.ln()
        };
    }
    if x < 0.0 || x > n {
        return f64::NEG_INFINITY;
    }
    let lc = stirling_error(n)
        - stirling_error(x)
        - stirling_error(n - x)
        - deviance_term(x, n * p)
        - deviance_term(n - x, n * q);
    let lf = (2.0 * PI).ln() + x.ln() + (-x / n).ln_1p();
    lc - 0.5 * lf
}

/// `log Binomial(k; n, p)`; `-inf` when `k > n`.
pub fn binomial_ln_pmf(k: u64, n: u64, p: f64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    binomial_ln_pmf_raw(k as f64, n as f64, p, 1.0 - p)
}

/// `log NegBin(k; r, p)` counting failures before the `r`-th success, with
/// real-valued `r > 0`: `Γ(k+r) / (k! Γ(r)) p^r (1-p)^k`.
pub fn neg_binomial_ln_pmf(k: u64, r: f64, p: f64) -> f64 {
    if !(r > 0.0) || !(0.0..=1.0).contains(&p) || p == 0.0 {
        return f64::NAN;
    }
    if k == 0 {
        return r * p.ln();
    }
    let x = k as f64;
    let ans = binomial_ln_pmf_raw(r, x + r, p, 1.0 - p);
    (r / (r + x)).ln() + ans
}

/// `log(1 - exp(-x))` for `x > 0`.
#[inline]
pub fn ln_one_minus_exp_neg(x: f64) -> f64 {
    if x > std::f64::consts::LN_2 {
        (-(-x).exp()).ln_1p()
    } else {
        (-(-x).exp_m1()).ln()
    }
}

/// Standard normal upper tail probability.
#[inline]
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom_exact(k: u64, n: u64, p: f64) -> f64 {
        let mut c = 1.0f64;
        for i in 0..k {
            c = c * (n - i) as f64 / (i + 1) as f64;
        }
        c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
    }

    #[test]
    fn stirling_error_continuity_at_switch() {
        for &n in &[15.0, 35.0, 80.0, 500.0] {
            let lo = stirling_error(n);
            let hi = stirling_error(n + 1e-9);
            assert!((lo - hi).abs() < 1e-12, "n={n}: {lo} vs {hi}");
        }
    }

    #[test]
    fn binomial_small_cases() {
        for n in 0..40u64 {
            for k in 0..=n {
                for &p in &[0.01, 0.3, 0.5, 0.97] {
                    let got = binomial_ln_pmf(k, n, p).exp();
                    let want = binom_exact(k, n, p);
                    assert!((got - want).abs() < 1e-13, "k={k} n={n} p={p}");
                }
            }
        }
    }

    #[test]
    fn poisson_zero_rate() {
        assert_eq!(poisson_ln_pmf(0, 0.0), 0.0);
        assert_eq!(poisson_ln_pmf(3, 0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn log_add_exp_handles_infinities() {
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 1.5), 1.5);
        assert!((log_add_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn one_minus_exp_small_argument() {
        let x = 1e-12;
        assert!((ln_one_minus_exp_neg(x) - x.ln()).abs() < 1e-6);
    }
}
