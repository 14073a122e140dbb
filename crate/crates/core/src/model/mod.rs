//! Probability model: latent birth-death transitions, binomial reporting,
//! the per-day coalescent likelihood of a discretised phylogeny, and the
//! parameter priors. Every density is returned on the log scale.

pub mod bessel;
pub mod special;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use self::special::{
    binomial_ln_pmf, binomial_ln_pmf_raw, ln_one_minus_exp_neg, neg_binomial_ln_pmf,
    poisson_ln_pmf,
};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("{coalescences} coalescences exceed the {pairs} available pairs among {lineages} lineages")]
    TooManyCoalescences {
        lineages: u64,
        coalescences: u64,
        pairs: u64,
    },
}

/// Largest prevalence the samplers represent. Draws saturate here and the
/// filter gives such states zero weight: they only arise when a proposed
/// birth rate makes the epidemic explode, and counts stay exact in `f64`.
pub const MAX_PREVALENCE: u64 = 1 << 50;

/// Parameters moved by the outer MCMC chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    /// Per-day random-walk scale of the birth rate.
    pub sigma: f64,
    /// Reporting probability.
    pub rho: f64,
    /// Prevalence on day 0.
    pub x0: u64,
}

impl Theta {
    pub fn new(sigma: f64, rho: f64, x0: u64) -> Result<Self, ModelError> {
        let theta = Theta { sigma, rho, x0 };
        theta.validate()?;
        Ok(theta)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(ModelError::InvalidParameter {
                name: "sigma",
                value: self.sigma,
                reason: "must be positive and finite",
            });
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(ModelError::InvalidParameter {
                name: "rho",
                value: self.rho,
                reason: "must lie in (0, 1]",
            });
        }
        if self.x0 < 1 {
            return Err(ModelError::InvalidParameter {
                name: "x0",
                value: self.x0 as f64,
                reason: "must be at least 1",
            });
        }
        Ok(())
    }
}

/// Known, constant removal rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedRates {
    pub gamma: f64,
}

impl FixedRates {
    pub fn new(gamma: f64) -> Result<Self, ModelError> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(ModelError::InvalidParameter {
                name: "gamma",
                value: gamma,
                reason: "must be positive and finite",
            });
        }
        Ok(FixedRates { gamma })
    }
}

/// One trajectory of birth rates (days 1..=N) and prevalence (days 0..=N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPath {
    /// `beta[n - 1]` is the birth rate on day `n`.
    pub beta: Vec<f64>,
    /// `x[n]` is the prevalence on day `n`, including day 0.
    pub x: Vec<u64>,
}

impl LatentPath {
    pub fn n_days(&self) -> usize {
        self.beta.len()
    }
}

/// Observed prevalence; `None` marks a missing day. `y[n - 1]` is day `n`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservedSeries {
    pub y: Vec<Option<u64>>,
}

impl ObservedSeries {
    pub fn new(y: Vec<Option<u64>>) -> Self {
        ObservedSeries { y }
    }

    pub fn missing(n_days: usize) -> Self {
        ObservedSeries {
            y: vec![None; n_days],
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_observed(&self) -> usize {
        self.y.iter().filter(|v| v.is_some()).count()
    }
}

/// `log P(B - D = k)` for independent `B ~ Poisson(mu1)`, `D ~ Poisson(mu2)`.
///
/// Written so that `skellam_ln_pmf(k, a, b) == skellam_ln_pmf(-k, b, a)`
/// holds bit for bit.
pub fn skellam_ln_pmf(k: i64, mu1: f64, mu2: f64) -> f64 {
    debug_assert!(mu1 >= 0.0 && mu2 >= 0.0);
    if mu2 == 0.0 {
        return if k >= 0 {
            poisson_ln_pmf(k as u64, mu1)
        } else {
            f64::NEG_INFINITY
        };
    }
    if mu1 == 0.0 {
        return if k <= 0 {
            poisson_ln_pmf(k.unsigned_abs(), mu2)
        } else {
            f64::NEG_INFINITY
        };
    }
    let r1 = mu1.sqrt();
    let r2 = mu2.sqrt();
    let z = 2.0 * (mu1 * mu2).sqrt();
    let gap = r1 - r2;
    // Always take the log of a ratio >= 1 so that swapping the rates negates
    // the tilt exactly.
    let ln_ratio = if mu1 >= mu2 { (mu1 / mu2).ln() } else { -(mu2 / mu1).ln() };
    let tilt = 0.5 * k as f64 * ln_ratio;
    -(gap * gap) + tilt + bessel::ln_bessel_i_scaled(k.unsigned_abs(), z)
}

/// One day of the latent epidemic: `Skellam(beta x_prev, gamma x_prev)`
/// evaluated at `x_next - x_prev`, deliberately not conditioned on the
/// epidemic staying positive.
pub fn latent_step_ln_pmf(x_prev: u64, x_next: u64, beta: f64, rates: &FixedRates) -> f64 {
    let xp = x_prev as f64;
    let k = x_next as i64 - x_prev as i64;
    skellam_ln_pmf(k, beta * xp, rates.gamma * xp)
}

/// `log Binomial(y; x, rho)`.
pub fn obs_ln_pmf(y: u64, x: u64, rho: f64) -> f64 {
    if y > x {
        return f64::NEG_INFINITY;
    }
    binomial_ln_pmf(y, x, rho)
}

/// Number of unordered pairs among `a` lineages.
#[inline]
pub fn pairs(a: u64) -> u64 {
    if a < 2 {
        0
    } else {
        a * (a - 1) / 2
    }
}

/// Per-day coalescent likelihood: `c ~ Binomial(C(a,2), 1 - exp(-2 beta / x))`.
///
/// Returns `-inf` when two or more lineages exist but the prevalence `x` is
/// smaller than the lineage count.
pub fn coal_slice_ln_pmf(a: u64, c: u64, beta: f64, x: u64) -> Result<f64, ModelError> {
    let n = pairs(a);
    if c > n {
        return Err(ModelError::TooManyCoalescences {
            lineages: a,
            coalescences: c,
            pairs: n,
        });
    }
    Ok(coal_slice_ln_pmf_unchecked(a, c, beta, x))
}

/// Same as [`coal_slice_ln_pmf`] for callers that validated `c <= C(a,2)`.
#[inline]
pub fn coal_slice_ln_pmf_unchecked(a: u64, c: u64, beta: f64, x: u64) -> f64 {
    if a < 2 {
        return if c == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if x < a {
        return f64::NEG_INFINITY;
    }
    let n = pairs(a) as f64;
    let rate = 2.0 * beta / x as f64;
    if rate == 0.0 {
        return if c == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let cf = c as f64;
    // Binomial with q = exp(-rate) and p = 1 - q, both computed accurately.
    let q = (-rate).exp();
    let p = -(-rate).exp_m1();
    if c == 0 {
        return -rate * n;
    }
    if c as f64 == n {
        return n * ln_one_minus_exp_neg(rate);
    }
    binomial_ln_pmf_raw(cf, n, p, q)
}

/// `log FoldedNormal(x; mu, sigma)`, the law of `|Z|` for `Z ~ N(mu, sigma²)`.
pub fn folded_normal_ln_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    debug_assert!(sigma > 0.0);
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    let a = (x - mu) / sigma;
    let b = (x + mu) / sigma;
    let la = -0.5 * a * a;
    let lb = -0.5 * b * b;
    special::log_add_exp(la, lb) - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// `log Exp(x; rate)`.
pub fn exponential_ln_pdf(x: f64, rate: f64) -> f64 {
    if x < 0.0 {
        f64::NEG_INFINITY
    } else {
        rate.ln() - rate * x
    }
}

/// Hyper-parameters of the parameter priors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Rate of the exponential prior on `sigma`.
    pub sigma_rate: f64,
    /// Negative-binomial size `r` of the day-0 prevalence prior.
    pub x0_size: f64,
    /// Negative-binomial success probability of the day-0 prevalence prior.
    pub x0_prob: f64,
}

impl Default for PriorConfig {
    /// `sigma ~ Exp(10)`, `x0 ~ NegBin(0.56, 0.1)` (mean 5, variance 50).
    fn default() -> Self {
        PriorConfig {
            sigma_rate: 10.0,
            x0_size: 0.56,
            x0_prob: 0.1,
        }
    }
}

impl PriorConfig {
    /// Method-of-moments negative binomial for the day-0 prevalence.
    pub fn with_x0_moments(mut self, mean: f64, variance: f64) -> Self {
        let p = mean / variance;
        self.x0_prob = p;
        self.x0_size = mean * p / (1.0 - p);
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.sigma_rate > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "sigma_rate",
                value: self.sigma_rate,
                reason: "must be positive",
            });
        }
        if !(self.x0_size > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "x0_size",
                value: self.x0_size,
                reason: "must be positive",
            });
        }
        if !(self.x0_prob > 0.0 && self.x0_prob <= 1.0) {
            return Err(ModelError::InvalidParameter {
                name: "x0_prob",
                value: self.x0_prob,
                reason: "must lie in (0, 1]",
            });
        }
        Ok(())
    }
}

/// Rate of the exponential prior on the day-1 birth rate; its mean is `2 gamma`.
#[inline]
pub fn beta1_prior_rate(rates: &FixedRates) -> f64 {
    1.0 / (2.0 * rates.gamma)
}

/// Log prior of the chain parameters `(sigma, rho, x0)` alone.
pub fn theta_ln_prior(theta: &Theta, prior: &PriorConfig) -> f64 {
    if !(theta.sigma > 0.0) || !(theta.rho > 0.0 && theta.rho <= 1.0) || theta.x0 < 1 {
        return f64::NEG_INFINITY;
    }
    exponential_ln_pdf(theta.sigma, prior.sigma_rate)
        + neg_binomial_ln_pmf(theta.x0, prior.x0_size, prior.x0_prob)
}

/// Joint log prior of `(beta_1, sigma, rho, x0)`.
pub fn log_priors(theta: &Theta, beta1: f64, rates: &FixedRates, prior: &PriorConfig) -> f64 {
    if !(beta1 >= 0.0) {
        return f64::NEG_INFINITY;
    }
    theta_ln_prior(theta, prior) + exponential_ln_pdf(beta1, beta1_prior_rate(rates))
}
