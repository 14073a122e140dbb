//! Exponentially scaled modified Bessel function of the first kind, in logs.
//!
//! `ln_bessel_i_scaled(nu, x)` returns `ln I_nu(x) - x` for integer order
//! `nu >= 0` and `x >= 0`. Two routes are used:
//!
//! * below [`SERIES_LIMIT`] (measured by `sqrt(nu² + x²)`) the ascending power
//!   series is summed directly; all terms are positive so there is no
//!   cancellation;
//! * above it, Debye's uniform asymptotic expansion is evaluated in the
//!   variables `s = sqrt(nu² + x²)` and `p = nu / s`. Writing each term as
//!   `U_k(p) / nu^k = V_k(p) / s^k` with `V_k(p) = U_k(p) / p^k` keeps the
//!   expansion valid down to `nu = 0`, where it becomes Hankel's large-argument
//!   series.

use std::f64::consts::PI;
use std::sync::OnceLock;

use super::special::ln_gamma;

/// Switch point between the power series and the uniform expansion.
pub const SERIES_LIMIT: f64 = 30.0;

const DEBYE_TERMS: usize = 16;

/// Coefficients of `V_k(p)` in ascending powers of `p`, k = 0..DEBYE_TERMS.
fn debye_polynomials() -> &'static [Vec<f64>] {
    static POLYS: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    POLYS.get_or_init(|| {
        // U_{k+1}(p) = ½ p² (1 - p²) U_k'(p) + ⅛ ∫_0^p (1 - 5t²) U_k(t) dt
        let mut u: Vec<Vec<f64>> = vec![vec![1.0]];
        for k in 0..DEBYE_TERMS {
            let cur = &u[k];
            let mut next = vec![0.0; cur.len() + 3];
            for (j, &c) in cur.iter().enumerate() {
                if j > 0 {
                    let d = c * j as f64; // coefficient of p^(j-1) in U_k'
                    next[j + 1] += 0.5 * d;
                    next[j + 3] -= 0.5 * d;
                }
                next[j + 1] += 0.125 * c / (j + 1) as f64;
                next[j + 3] -= 0.125 * 5.0 * c / (j + 3) as f64;
            }
            u.push(next);
        }
        u.into_iter()
            .enumerate()
            .map(|(k, coeffs)| coeffs.into_iter().skip(k).collect())
            .collect()
    })
}

#[inline]
fn horner(coeffs: &[f64], p: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * p + c)
}

/// `ln I_nu(x) - x`.
pub fn ln_bessel_i_scaled(nu: u64, x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x == 0.0 {
        return if nu == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let nuf = nu as f64;
    let s = (nuf * nuf + x * x).sqrt();
    if s < SERIES_LIMIT {
        series_scaled(nuf, x)
    } else {
        debye_scaled(nuf, x, s)
    }
}

const FACTORIAL_TABLE: usize = 256;

/// `ln Γ(nu + 1)`, tabulated for the small integer orders the series sees.
#[inline]
fn ln_factorial(nu: f64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    if nu < FACTORIAL_TABLE as f64 && nu.fract() == 0.0 {
        TABLE.get_or_init(|| (0..FACTORIAL_TABLE).map(|k| ln_gamma(k as f64 + 1.0)).collect())[nu as usize]
    } else {
        ln_gamma(nu + 1.0)
    }
}

/// Power-series route, exposed so tests can compare both routes.
pub fn series_scaled(nu: f64, x: f64) -> f64 {
    let half = 0.5 * x;
    let q = half * half;
    let log_t0 = nu * half.ln() - ln_factorial(nu);
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut m = 0.0f64;
    loop {
        term *= q / ((m + 1.0) * (m + nu + 1.0));
        sum += term;
        m += 1.0;
        if term < sum * 1e-17 && m * (m + nu) > q {
            break;
        }
        if m > 100_000.0 {
            break;
        }
    }
    log_t0 + sum.ln() - x
}

/// Uniform asymptotic route, exposed so tests can compare both routes.
pub fn debye_scaled(nu: f64, x: f64, s: f64) -> f64 {
    let p = nu / s;
    let polys = debye_polynomials();
    let inv_s = 1.0 / s;
    let mut sum = 1.0;
    let mut scale = 1.0;
    for poly in polys.iter().skip(1) {
        scale *= inv_s;
        let t = horner(poly, p) * scale;
        sum += t;
        if t.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    // s - x = nu² / (s + x) avoids cancellation for nu << x.
    let s_minus_x = nu * nu / (s + x);
    let log_ratio = if nu == 0.0 {
        0.0
    } else {
        nu * (x / (nu + s)).ln()
    };
    s_minus_x + log_ratio - 0.5 * (2.0 * PI * s).ln() + sum.ln()
}
