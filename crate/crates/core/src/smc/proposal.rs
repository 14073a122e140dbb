//! Data-driven mixture proposal for the next day's prevalence.
//!
//! With probability `1 - p` the Skellam transition is used, restricted to the
//! admissible range `0..=x_max`; with probability `p = min(ρ/0.1, 0.95)` the
//! prevalence is drawn as `y + NegBin(y, ρ)` failures, so it is centred on the
//! observation scaled up by the reporting probability. Both components are
//! normalised over the admissible range, so the returned density is the exact
//! density of the draw.
//!
//! The filter's transition is the Skellam step renormalised over the same
//! range. Away from very small prevalences the renormalising mass is one to
//! machine precision, so this only matters when an epidemic is close to dying
//! out; it makes a prior-only proposal weigh exactly one.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::model::special::{ln_gamma, log_add_exp, neg_binomial_ln_pmf};
use crate::model::{skellam_ln_pmf, FixedRates};
use crate::simulate::sample_poisson;

const REJECTION_TRIES: usize = 256;

/// Probability of the negative-binomial component.
#[inline]
pub fn mixture_weight(rho: f64) -> f64 {
    (rho / 0.1).min(0.95)
}

/// Mixture weight and its logs for one value of ρ, shared by all particles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mixture {
    pub rho: f64,
    pub p: f64,
    ln_p: f64,
    ln_1mp: f64,
}

impl Mixture {
    pub fn new(rho: f64) -> Self {
        let p = mixture_weight(rho);
        Mixture { rho, p, ln_p: p.ln(), ln_1mp: (-p).ln_1p() }
    }
}

/// A proposed prevalence with its proposal log-density and the model's log
/// transition probability (computed once and shared with the weight).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrevalenceDraw {
    pub x: u64,
    pub ln_q: f64,
    pub ln_transition: f64,
}

/// Everything needed to evaluate or sample the proposal for one particle.
#[derive(Debug, Clone, Copy)]
pub struct PrevalenceProposal {
    x_prev: u64,
    mu_birth: f64,
    mu_death: f64,
    x_max: Option<u64>,
    /// Observation and mixture when the negative-binomial component is active.
    negbin: Option<(u64, Mixture)>,
}

impl PrevalenceProposal {
    pub fn new(
        x_prev: u64,
        beta: f64,
        rates: &FixedRates,
        y: Option<u64>,
        rho: f64,
        x_max: Option<u64>,
    ) -> Self {
        Self::with_mixture(x_prev, beta, rates, y, &Mixture::new(rho), x_max)
    }

    /// As [`PrevalenceProposal::new`] with the mixture logs precomputed.
    pub fn with_mixture(
        x_prev: u64,
        beta: f64,
        rates: &FixedRates,
        y: Option<u64>,
        mix: &Mixture,
        x_max: Option<u64>,
    ) -> Self {
        let xp = x_prev as f64;
        let negbin = match y {
            Some(y) if y > 0 && mix.p > 0.0 && x_max.is_none_or(|m| y <= m) => Some((y, *mix)),
            _ => None,
        };
        PrevalenceProposal {
            x_prev,
            mu_birth: beta * xp,
            mu_death: rates.gamma * xp,
            x_max,
            negbin,
        }
    }

    #[inline]
    fn transition(&self, x: u64) -> f64 {
        skellam_ln_pmf(x as i64 - self.x_prev as i64, self.mu_birth, self.mu_death)
    }

    /// Log of the Skellam mass on the admissible range.
    fn skellam_ln_norm(&self) -> f64 {
        if let Some(m) = self.x_max {
            let terms: Vec<f64> = (0..=m).map(|x| self.transition(x)).collect();
            return crate::model::special::log_sum_exp(&terms);
        }
        // Mass below zero needs at least x_prev + 1 deaths; skip the sum when a
        // Chernoff bound on the death count makes it negligible.
        let m = (self.x_prev + 1) as f64;
        let mu = self.mu_death;
        if mu < m && -mu + m * (1.0 + (mu / m).ln()) < -40.0 {
            return 0.0;
        }
        let tail = lower_tail(self.x_prev + 1, self.mu_birth, self.mu_death);
        if tail < 0.5 {
            (-tail).ln_1p()
        } else {
            // Most of the mass is negative; sum the admissible side directly.
            let mode = (self.mu_birth - self.mu_death).floor() as i64;
            let mut head = 0.0;
            let mut k = -(self.x_prev as i64);
            loop {
                let t = skellam_ln_pmf(k, self.mu_birth, self.mu_death).exp();
                head += t;
                if k > mode && t <= 1e-18 * head.max(1e-300) {
                    break;
                }
                k += 1;
            }
            head.ln()
        }
    }

    /// Log of the negative-binomial failure mass on the admissible range.
    fn negbin_ln_norm(&self, y: u64, rho: f64) -> f64 {
        match self.x_max {
            None => 0.0,
            Some(m) => {
                let terms: Vec<f64> = (0..=m - y)
                    .map(|f| neg_binomial_ln_pmf(f, y as f64, rho))
                    .collect();
                crate::model::special::log_sum_exp(&terms)
            }
        }
    }

    fn in_range(&self, x: u64) -> bool {
        self.x_max.is_none_or(|m| x <= m)
    }

    /// Proposal log-density at `x` given the precomputed normalisers.
    fn ln_density_with(&self, x: u64, ln_transition: f64, ln_z_sk: f64, ln_z_nb: f64) -> f64 {
        if !self.in_range(x) {
            return f64::NEG_INFINITY;
        }
        let sk = ln_transition - ln_z_sk;
        match self.negbin {
            None => sk,
            Some((y, mix)) => {
                let nb = if x >= y {
                    mix.ln_p + neg_binomial_ln_pmf(x - y, y as f64, mix.rho) - ln_z_nb
                } else {
                    f64::NEG_INFINITY
                };
                log_add_exp(nb, mix.ln_1mp + sk)
            }
        }
    }

    /// Log transition probability renormalised over the admissible range.
    pub fn ln_transition(&self, x: u64) -> f64 {
        if self.x_prev == 0 {
            return if x == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        if !self.in_range(x) {
            return f64::NEG_INFINITY;
        }
        self.transition(x) - self.skellam_ln_norm()
    }

    /// Proposal log-density at `x`.
    pub fn ln_density(&self, x: u64) -> f64 {
        if self.x_prev == 0 {
            return if x == 0 { 0.0 } else { f64::NEG_INFINITY };
        }
        let ln_z_nb = self.negbin.map_or(0.0, |(y, mix)| self.negbin_ln_norm(y, mix.rho));
        self.ln_density_with(x, self.transition(x), self.skellam_ln_norm(), ln_z_nb)
    }

    fn sample_skellam<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        for _ in 0..REJECTION_TRIES {
            let b = sample_poisson(rng, self.mu_birth);
            let d = sample_poisson(rng, self.mu_death);
            let x = self.x_prev as i64 + b as i64 - d as i64;
            if x >= 0 && self.in_range(x as u64) {
                return x as u64;
            }
        }
        // Admissible region is rare: invert the restricted distribution.
        let target = rng.random::<f64>() * self.skellam_ln_norm().exp();
        let mut cum = 0.0;
        let mut x = 0u64;
        let mode = (self.x_prev as f64 + self.mu_birth - self.mu_death).max(0.0) as u64;
        loop {
            cum += self.transition(x).exp();
            if cum >= target || !self.in_range(x + 1) || (x > mode && cum > 0.0 && self.transition(x).exp() < 1e-300) {
                return x;
            }
            x += 1;
        }
    }

    fn sample_negbin<R: Rng + ?Sized>(&self, y: u64, rho: f64, rng: &mut R) -> u64 {
        for _ in 0..REJECTION_TRIES {
            let f = if rho >= 1.0 {
                0
            } else {
                let lambda = Gamma::new(y as f64, (1.0 - rho) / rho)
                    .expect("positive gamma parameters")
                    .sample(rng);
                sample_poisson(rng, lambda)
            };
            if self.in_range(y + f) {
                return y + f;
            }
        }
        let m = self.x_max.expect("rejection only fails with an upper bound");
        let target = rng.random::<f64>() * self.negbin_ln_norm(y, rho).exp();
        let mut cum = 0.0;
        for f in 0..=m - y {
            cum += neg_binomial_ln_pmf(f, y as f64, rho).exp();
            if cum >= target {
                return y + f;
            }
        }
        m
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PrevalenceDraw {
        if self.x_prev == 0 {
            return PrevalenceDraw {
                x: 0,
                ln_q: 0.0,
                ln_transition: 0.0,
            };
        }
        let x = match self.negbin {
            Some((y, mix)) if rng.random::<f64>() < mix.p => self.sample_negbin(y, mix.rho, rng),
            _ => self.sample_skellam(rng),
        };
        let raw = self.transition(x);
        let ln_z_sk = self.skellam_ln_norm();
        let ln_z_nb = self.negbin.map_or(0.0, |(y, mix)| self.negbin_ln_norm(y, mix.rho));
        let ln_q = self.ln_density_with(x, raw, ln_z_sk, ln_z_nb);
        let ln_transition = raw - ln_z_sk;
        PrevalenceDraw {
            x,
            ln_q,
            ln_transition,
        }
    }
}

/// Transition log-probability used by the filter: the Skellam step
/// renormalised over `0..=x_max` (or all non-negative values).
pub fn restricted_transition_ln_pmf(
    x_prev: u64,
    x_next: u64,
    beta: f64,
    rates: &FixedRates,
    x_max: Option<u64>,
) -> f64 {
    PrevalenceProposal::new(x_prev, beta, rates, None, 1.0, x_max).ln_transition(x_next)
}

/// `P(D - B >= m)` for `B ~ Poisson(mu_birth)`, `D ~ Poisson(mu_death)`,
/// summed as `Σ_{d>=m} P(D = d) P(B <= d - m)` with Poisson recurrences.
fn lower_tail(m: u64, mu_birth: f64, mu_death: f64) -> f64 {
    if mu_death <= 0.0 {
        return 0.0;
    }
    let mf = m as f64;
    let mut p_d = (-mu_death + mf * mu_death.ln() - ln_gamma(mf + 1.0)).exp();
    let mut p_b = (-mu_birth).exp();
    let mut cdf_b = p_b;
    let mut total = 0.0;
    let mut d = mf;
    let mut j = 0.0;
    loop {
        let term = p_d * cdf_b;
        total += term;
        if d > mu_death && term <= 1e-18 * total.max(1e-300) {
            break;
        }
        d += 1.0;
        p_d *= mu_death / d;
        j += 1.0;
        p_b *= mu_birth / j;
        cdf_b = (cdf_b + p_b).min(1.0);
        if d - mf > 1e7 {
            break;
        }
    }
    total
}

/// Draw the next prevalence for one particle.
pub fn propose_prevalence<R: Rng + ?Sized>(
    x_prev: u64,
    beta: f64,
    rates: &FixedRates,
    y: Option<u64>,
    rho: f64,
    x_max: Option<u64>,
    rng: &mut R,
) -> PrevalenceDraw {
    PrevalenceProposal::new(x_prev, beta, rates, y, rho, x_max).sample(rng)
}
