//! Random-walk proposal for θ in the unconstrained coordinates
//! `u = (ln σ, logit ρ, ln x₀)`.
//!
//! σ and ρ are continuous, so their part of the proposal ratio is the
//! Jacobian of the transform. x₀ is an integer obtained by rounding
//! `exp(u₃)`; its proposal probability is the Gaussian mass of the rounding
//! cell conditional on the other two increments, which makes the ratio exact
//! for the discrete coordinate.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::special::normal_sf;
use crate::model::Theta;

/// Largest ρ used inside the logit so that ρ = 1 stays representable.
const RHO_CEILING: f64 = 1.0 - 1e-12;

pub type Matrix3 = [[f64; 3]; 3];

#[inline]
fn logit(p: f64) -> f64 {
    let p = p.min(RHO_CEILING);
    (p / (1.0 - p)).ln()
}

#[inline]
fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Map θ to unconstrained coordinates.
pub fn to_unconstrained(theta: &Theta) -> [f64; 3] {
    [theta.sigma.ln(), logit(theta.rho), (theta.x0 as f64).ln()]
}

/// Continuous part of the inverse map; x₀ is returned unrounded.
pub fn from_unconstrained(u: &[f64; 3]) -> (f64, f64, f64) {
    (u[0].exp(), logistic(u[1]), u[2].exp())
}

/// Round a continuous x₀ to the nearest integer, at least 1.
#[inline]
pub fn round_x0(v: f64) -> u64 {
    if !(v >= 1.5) {
        1
    } else if v >= 9.0e18 {
        u64::MAX / 2
    } else {
        v.round() as u64
    }
}

/// Range of `ln v` that rounds to `x0`.
fn ln_cell(x0: u64) -> (f64, f64) {
    let lo = if x0 <= 1 {
        f64::NEG_INFINITY
    } else {
        (x0 as f64 - 0.5).ln()
    };
    (lo, (x0 as f64 + 0.5).ln())
}

/// `ln P(a <= Z < b)` for a standard normal `Z`, accurate in both tails.
pub fn ln_standard_normal_mass(a: f64, b: f64) -> f64 {
    if !(b > a) {
        return f64::NEG_INFINITY;
    }
    let mass = if a >= 0.0 {
        normal_sf(a) - normal_sf(b)
    } else if b <= 0.0 {
        normal_sf(-b) - normal_sf(-a)
    } else {
        1.0 - normal_sf(b) - normal_sf(-a)
    };
    if mass > 0.0 {
        mass.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Log-Jacobian of θ ↦ u evaluated as the change-of-variables correction
/// `ln[σ* ρ*(1-ρ*) x₀*] - ln[σ ρ(1-ρ) x₀]`.
pub fn log_jacobian(current: &Theta, proposal: &Theta) -> f64 {
    let part = |t: &Theta| {
        let rho = t.rho.min(RHO_CEILING);
        t.sigma.ln() + rho.ln() + (1.0 - rho).ln() + (t.x0 as f64).ln()
    };
    part(proposal) - part(current)
}

/// Continuous-coordinate part of the Jacobian (σ and ρ only).
fn log_jacobian_continuous(current: &Theta, proposal: &Theta) -> f64 {
    let part = |t: &Theta| {
        let rho = t.rho.min(RHO_CEILING);
        t.sigma.ln() + rho.ln() + (1.0 - rho).ln()
    };
    part(proposal) - part(current)
}

/// Lower Cholesky factor of a symmetric positive-definite 3×3 matrix.
pub fn cholesky(m: &Matrix3) -> Option<Matrix3> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// A proposed θ with the log of `q(current | proposal) / q(proposal | current)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaProposal {
    pub theta: Theta,
    pub u: [f64; 3],
    pub log_ratio: f64,
}

/// Propose θ* from `current` using increments `scale · L z` where `L` is the
/// Cholesky factor of the adapted covariance.
pub fn propose_theta_with_factor<R: Rng + ?Sized>(
    current: &Theta,
    factor: &Matrix3,
    scale: f64,
    rng: &mut R,
) -> ThetaProposal {
    let z: [f64; 3] = std::array::from_fn(|_| rng.sample(StandardNormal));
    let u = to_unconstrained(current);
    let l = factor.map(|row| row.map(|v| v * scale));
    let eps = [
        l[0][0] * z[0],
        l[1][0] * z[0] + l[1][1] * z[1],
        l[2][0] * z[0] + l[2][1] * z[1] + l[2][2] * z[2],
    ];
    let u_star = [u[0] + eps[0], u[1] + eps[1], u[2] + eps[2]];
    let (sigma, rho, x0_cont) = from_unconstrained(&u_star);
    let proposal = Theta {
        sigma,
        rho,
        x0: round_x0(x0_cont),
    };

    // The third increment given the first two is N(m, sd²) with
    // m = l31 z1 + l32 z2 and sd = l33; the reverse move negates z1, z2.
    let m = l[2][0] * z[0] + l[2][1] * z[1];
    let sd = l[2][2];
    let cell_mass = |x0_to: u64, from_ln: f64, mean: f64| {
        let (lo, hi) = ln_cell(x0_to);
        let (a, b) = (lo - from_ln - mean, hi - from_ln - mean);
        if sd > 0.0 {
            ln_standard_normal_mass(a / sd, b / sd)
        } else if a <= 0.0 && 0.0 < b {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    };
    let forward = cell_mass(proposal.x0, u[2], m);
    let reverse = cell_mass(current.x0, (proposal.x0 as f64).ln(), -m);
    let log_ratio = if forward == f64::NEG_INFINITY {
        // Only reachable through floating-point edge cases; refuse the move.
        f64::NEG_INFINITY
    } else {
        log_jacobian_continuous(current, &proposal) + reverse - forward
    };
    ThetaProposal {
        theta: proposal,
        u: to_unconstrained(&proposal),
        log_ratio,
    }
}

/// Propose θ* with covariance `scale² · cov`.
pub fn propose_theta<R: Rng + ?Sized>(
    current: &Theta,
    cov: &Matrix3,
    scale: f64,
    rng: &mut R,
) -> Option<ThetaProposal> {
    let l = cholesky(cov)?;
    Some(propose_theta_with_factor(current, &l, scale, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const ID: Matrix3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    #[test]
    fn zero_scale_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = Theta::new(0.05, 0.03, 7).unwrap();
        let p = propose_theta(&t, &ID, 0.0, &mut rng).unwrap();
        assert!((p.theta.sigma - t.sigma).abs() < 1e-15);
        assert!((p.theta.rho - t.rho).abs() < 1e-15);
        assert_eq!(p.theta.x0, 7);
        assert!(p.log_ratio.abs() < 1e-12);
    }

    #[test]
    fn jacobian_formula() {
        let a = Theta::new(0.05, 0.2, 3).unwrap();
        let b = Theta::new(0.08, 0.6, 5).unwrap();
        let expected = 0.08f64.ln() - 0.05f64.ln() + (0.6f64 * 0.4).ln() - (0.2f64 * 0.8).ln()
            + 5f64.ln()
            - 3f64.ln();
        assert!((log_jacobian(&a, &b) - expected).abs() < 1e-14);
    }

    #[test]
    fn transform_round_trip() {
        for &(s, r) in &[(0.05, 0.03), (1.3, 0.5), (1e-3, 0.999), (4.0, 1e-4)] {
            let t = Theta::new(s, r, 4).unwrap();
            let u = to_unconstrained(&t);
            let (s2, r2, x2) = from_unconstrained(&u);
            let back = to_unconstrained(&Theta { sigma: s2, rho: r2, x0: round_x0(x2) });
            for i in 0..3 {
                assert!((back[i] - u[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_reconstructs() {
        let m = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let l = cholesky(&m).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| l[i][k] * l[j][k]).sum();
                assert!((v - m[i][j]).abs() < 1e-12);
            }
        }
        assert!(cholesky(&[[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).is_none());
    }

    #[test]
    fn normal_mass_tails() {
        assert!((ln_standard_normal_mass(f64::NEG_INFINITY, f64::INFINITY)).abs() < 1e-15);
        assert!((ln_standard_normal_mass(0.0, f64::INFINITY) - 0.5f64.ln()).abs() < 1e-15);
        let far = ln_standard_normal_mass(30.0, 31.0);
        assert!(far.is_finite() && far < -400.0);
    }

    /// With independent increments the x₀ ratio is the ratio of the two
    /// rounding-cell probabilities, which are checked against empirical
    /// transition frequencies.
    #[test]
    fn discrete_ratio_matches_empirical_kernel() {
        let cov = [[0.04, 0.0, 0.0], [0.0, 0.04, 0.0], [0.0, 0.0, 0.09]];
        let l = cholesky(&cov).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reps = 200_000;
        let from = |x0: u64| Theta::new(0.1, 0.5, x0).unwrap();
        let mut count = |a: u64, b: u64| {
            (0..reps)
                .filter(|_| propose_theta_with_factor(&from(a), &l, 1.0, &mut rng).theta.x0 == b)
                .count() as f64
                / reps as f64
        };
        let q34 = count(3, 4);
        let q43 = count(4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = loop {
            let p = propose_theta_with_factor(&from(3), &l, 1.0, &mut rng);
            if p.theta.x0 == 4 {
                break p;
            }
        };
        let reported = p.log_ratio - log_jacobian_continuous(&from(3), &p.theta);
        assert!((reported - (q43 / q34).ln()).abs() < 0.03, "{reported} vs {}", (q43 / q34).ln());
    }
}
