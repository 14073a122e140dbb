//! Particle filter over `(β_n, X_n)` producing an unbiased estimate of the
//! marginal likelihood and the full particle history for backward smoothing.

pub mod backward;
pub mod proposal;
pub mod resample;
pub mod rng;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::model::special::log_sum_exp;
use crate::model::{
    beta1_prior_rate, coal_slice_ln_pmf_unchecked, obs_ln_pmf, pairs, FixedRates, ObservedSeries,
    Theta, MAX_PREVALENCE,
};
use crate::phylo::DailyLineages;

pub use backward::{backward_simulate, trace_genealogy};
pub use proposal::{
    mixture_weight, propose_prevalence, Mixture, restricted_transition_ln_pmf, PrevalenceDraw,
    PrevalenceProposal,
};
pub use resample::{ess, multinomial_resample, systematic_resample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmcError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("particle history is degenerate; no path can be sampled")]
    DegenerateHistory,
}

/// Observations and genealogy summaries aligned on epidemic days `1..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmcData {
    pub observed: ObservedSeries,
    pub lineages: DailyLineages,
}

impl SmcData {
    /// Either source may be empty; the other then fixes the number of days.
    pub fn new(observed: ObservedSeries, lineages: DailyLineages) -> Result<Self, SmcError> {
        let n = observed.len().max(lineages.len());
        let observed = if observed.is_empty() {
            ObservedSeries::missing(n)
        } else {
            observed
        };
        let lineages = if lineages.is_empty() {
            DailyLineages::empty(n)
        } else {
            lineages
        };
        if observed.len() != lineages.len() {
            return Err(SmcError::InvalidInput(format!(
                "prevalence covers {} days but the genealogy covers {}",
                observed.len(),
                lineages.len()
            )));
        }
        if lineages.a.len() != lineages.c.len() {
            return Err(SmcError::InvalidInput("lineage and coalescence counts differ in length".into()));
        }
        for (day, (&a, &c)) in lineages.a.iter().zip(&lineages.c).enumerate() {
            if c > pairs(a) {
                return Err(SmcError::InvalidInput(format!(
                    "day {}: {c} coalescences among {a} lineages",
                    day + 1
                )));
            }
        }
        Ok(SmcData { observed, lineages })
    }

    pub fn n_days(&self) -> usize {
        self.observed.len()
    }

    pub fn has_data(&self) -> bool {
        self.observed.n_observed() > 0 || self.lineages.has_data()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResamplingScheme {
    #[default]
    Systematic,
    Multinomial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmcConfig {
    pub particles: usize,
    /// Resample when ESS falls below this fraction of the particle count;
    /// `1.0` resamples every day.
    pub ess_threshold: f64,
    pub resampling: ResamplingScheme,
    /// Known birth rates for days `1..=N`; β is then not proposed.
    pub fixed_beta: Option<Vec<f64>>,
    /// Restrict prevalence to `0..=x_max`.
    pub x_max: Option<u64>,
}

impl SmcConfig {
    pub fn new(particles: usize) -> Self {
        SmcConfig {
            particles,
            ess_threshold: 0.5,
            resampling: ResamplingScheme::Systematic,
            fixed_beta: None,
            x_max: None,
        }
    }

    pub fn validate(&self, n_days: usize) -> Result<(), SmcError> {
        if self.particles == 0 {
            return Err(SmcError::InvalidInput("at least one particle is required".into()));
        }
        if self.particles > u32::MAX as usize {
            return Err(SmcError::InvalidInput("too many particles".into()));
        }
        if !(self.ess_threshold > 0.0 && self.ess_threshold <= 1.0) {
            return Err(SmcError::InvalidInput(format!(
                "ESS threshold fraction {} outside (0, 1]",
                self.ess_threshold
            )));
        }
        if let Some(b) = &self.fixed_beta {
            if b.len() != n_days {
                return Err(SmcError::InvalidInput(format!(
                    "{} fixed birth rates for {n_days} days",
                    b.len()
                )));
            }
            if b.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(SmcError::InvalidInput("fixed birth rates must be finite and non-negative".into()));
            }
        }
        Ok(())
    }
}

/// All particles, weights and ancestors of one filter run. Day `n` occupies
/// rows `(n - 1) * K .. n * K` of the flat arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleHistory {
    pub particles: usize,
    pub x0: u64,
    pub beta: Vec<f64>,
    pub x: Vec<u64>,
    /// Filtering log-weights, including weight carried since the last resampling.
    pub log_w: Vec<f64>,
    /// Index (at day `n - 1`) of each particle's parent; day 1 has none.
    pub ancestor: Vec<u32>,
    /// Whether the particles of day `n` were resampled before propagation.
    pub resampled: Vec<bool>,
    /// Per-day log-likelihood increments.
    pub increments: Vec<f64>,
    pub fixed_beta: bool,
    pub x_max: Option<u64>,
}

impl ParticleHistory {
    /// Number of fully weighted days stored.
    pub fn n_days(&self) -> usize {
        self.increments.len()
    }

    #[inline]
    pub fn row(&self, day: usize) -> std::ops::Range<usize> {
        (day - 1) * self.particles..day * self.particles
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmcEstimate {
    pub log_likelihood: f64,
    pub history: ParticleHistory,
    pub degenerate: bool,
    /// Number of days on which the particles were resampled.
    pub resample_count: usize,
}

/// Log-weight of one step: transition, coalescent and observation terms
/// minus the proposal density. The transition is the Skellam step
/// renormalised over non-negative prevalence, matching the proposal's
/// support. The β factor cancels because β is drawn from its prior.
#[allow(clippy::too_many_arguments)]
pub fn step_log_weight(
    x_prev: u64,
    x_next: u64,
    beta: f64,
    rates: &FixedRates,
    y: Option<u64>,
    rho: f64,
    a: u64,
    c: u64,
    ln_q: f64,
) -> f64 {
    let transition = proposal::restricted_transition_ln_pmf(x_prev, x_next, beta, rates, None);
    weight_from_parts(transition, x_next, beta, y, rho, a, c, ln_q)
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn weight_from_parts(
    ln_transition: f64,
    x_next: u64,
    beta: f64,
    y: Option<u64>,
    rho: f64,
    a: u64,
    c: u64,
    ln_q: f64,
) -> f64 {
    if ln_transition == f64::NEG_INFINITY || x_next >= MAX_PREVALENCE {
        return f64::NEG_INFINITY;
    }
    let mut w = ln_transition - ln_q;
    if let Some(y) = y {
        w += obs_ln_pmf(y, x_next, rho);
    }
    if a >= 2 {
        w += coal_slice_ln_pmf_unchecked(a, c, beta, x_next);
    }
    if w.is_nan() {
        f64::NEG_INFINITY
    } else {
        w
    }
}

/// Draw β for day `day` given the parent's β.
#[inline]
fn propose_beta<R: Rng + ?Sized>(day: usize, prev: f64, sigma: f64, day1: &Exp<f64>, rng: &mut R) -> f64 {
    if day == 1 {
        day1.sample(rng)
    } else {
        let z: f64 = StandardNormal.sample(rng);
        (prev + sigma * z).abs()
    }
}

/// Run the particle filter at `theta`. Randomness comes from counter-based
/// streams derived from `seed`, so results are independent of thread count.
pub fn run_smc(
    theta: &Theta,
    rates: &FixedRates,
    data: &SmcData,
    config: &SmcConfig,
    seed: u64,
) -> Result<SmcEstimate, SmcError> {
    let n_days = data.n_days();
    config.validate(n_days)?;
    theta
        .validate()
        .map_err(|e| SmcError::InvalidInput(e.to_string()))?;
    let k = config.particles;
    let day1 = Exp::new(beta1_prior_rate(rates)).map_err(|e| SmcError::InvalidInput(e.to_string()))?;

    let mut h = ParticleHistory {
        particles: k,
        x0: theta.x0,
        beta: Vec::with_capacity(n_days * k),
        x: Vec::with_capacity(n_days * k),
        log_w: Vec::with_capacity(n_days * k),
        ancestor: Vec::with_capacity(n_days * k),
        resampled: Vec::with_capacity(n_days),
        increments: Vec::with_capacity(n_days),
        fixed_beta: config.fixed_beta.is_some(),
        x_max: config.x_max,
    };
    let mut log_lik = 0.0;
    let mut resample_count = 0;
    // Parent indices and carried log-weights for the next day.
    let mut parents: Vec<u32> = (0..k as u32).collect();
    let mut carried = vec![0.0f64; k];
    let mut carried_total = (k as f64).ln();
    let mut did_resample = false;
    let mut step: Vec<(f64, u64, f64)> = Vec::with_capacity(k);
    let mix = Mixture::new(theta.rho);

    for day in 1..=n_days {
        let prev_row = if day > 1 { Some(h.row(day - 1)) } else { None };
        let y = data.observed.y[day - 1];
        let a = data.lineages.a[day - 1];
        let c = data.lineages.c[day - 1];
        let fixed = config.fixed_beta.as_ref().map(|b| b[day - 1]);
        let (hb, hx) = (&h.beta, &h.x);
        (0..k)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng::stream_rng(seed, day as u64, i as u64);
                let p = parents[i] as usize;
                let (beta_prev, x_prev) = match &prev_row {
                    Some(r) => (hb[r.start + p], hx[r.start + p]),
                    None => (0.0, theta.x0),
                };
                let beta = fixed.unwrap_or_else(|| propose_beta(day, beta_prev, theta.sigma, &day1, &mut rng));
                let q = PrevalenceProposal::with_mixture(x_prev, beta, rates, y, &mix, config.x_max);
                let d = q.sample(&mut rng);
                let w = weight_from_parts(d.ln_transition, d.x, beta, y, theta.rho, a, c, d.ln_q);
                (beta, d.x, w)
            })
            .collect_into_vec(&mut step);

        let mut row_w = Vec::with_capacity(k);
        for (i, &(beta, x, w)) in step.iter().enumerate() {
            h.beta.push(beta);
            h.x.push(x);
            h.ancestor.push(parents[i]);
            row_w.push(carried[i] + w);
        }
        h.resampled.push(did_resample);
        let total = log_sum_exp(&row_w);
        h.log_w.extend_from_slice(&row_w);
        let increment = total - carried_total;
        h.increments.push(if total.is_finite() { increment } else { f64::NEG_INFINITY });

        if !total.is_finite() {
            return Ok(SmcEstimate {
                log_likelihood: f64::NEG_INFINITY,
                history: h,
                degenerate: true,
                resample_count,
            });
        }
        log_lik += increment;

        if day == n_days {
            break;
        }
        let weights: Vec<f64> = row_w.iter().map(|&l| (l - total).exp()).collect();
        let threshold = config.ess_threshold * k as f64;
        if config.ess_threshold >= 1.0 || ess(&weights) < threshold {
            let mut rrng = rng::stream_rng(seed, day as u64, rng::RESAMPLE_STREAM);
            let idx = match config.resampling {
                ResamplingScheme::Systematic => resample::systematic_resample(&weights, &mut rrng),
                ResamplingScheme::Multinomial => resample::multinomial_resample(&weights, &mut rrng),
            }
            .expect("finite total implies a positive weight");
            parents = idx.into_iter().map(|j| j as u32).collect();
            carried.iter_mut().for_each(|c| *c = 0.0);
            carried_total = (k as f64).ln();
            did_resample = true;
            resample_count += 1;
        } else {
            parents = (0..k as u32).collect();
            carried = row_w;
            carried_total = total;
            did_resample = false;
        }
    }

    Ok(SmcEstimate {
        log_likelihood: log_lik,
        history: h,
        degenerate: false,
        resample_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::latent_step_ln_pmf;

    fn rates() -> FixedRates {
        FixedRates { gamma: 0.1 }
    }

    fn theta() -> Theta {
        Theta::new(0.05, 0.3, 5).unwrap()
    }

    #[test]
    fn empty_series_has_unit_likelihood() {
        let data = SmcData::new(ObservedSeries::default(), DailyLineages::default()).unwrap();
        let est = run_smc(&theta(), &rates(), &data, &SmcConfig::new(10), 1).unwrap();
        assert_eq!(est.log_likelihood, 0.0);
        assert!(!est.degenerate);
    }

    #[test]
    fn no_data_gives_zero_log_likelihood() {
        let data = SmcData::new(ObservedSeries::missing(12), DailyLineages::empty(12)).unwrap();
        let est = run_smc(&theta(), &rates(), &data, &SmcConfig::new(50), 3).unwrap();
        assert!(est.log_likelihood.abs() < 1e-12, "{}", est.log_likelihood);
        assert!(est.history.log_w.iter().all(|w| w.abs() < 1e-9));
    }

    #[test]
    fn weight_recomputation() {
        let r = rates();
        let (x_prev, x_next, beta, rho) = (10u64, 12u64, 0.3, 0.4);
        let q = PrevalenceProposal::new(x_prev, beta, &r, Some(5), rho, None);
        let ln_q = q.ln_density(x_next);
        let w = step_log_weight(x_prev, x_next, beta, &r, Some(5), rho, 4, 2, ln_q);
        // Mass lost below zero: P(D - B > x_prev) by direct convolution.
        let mut lost = 0.0;
        for d in 0..200u64 {
            for b in 0..200u64 {
                if d > b + x_prev {
                    lost += (crate::model::special::poisson_ln_pmf(d, 0.1 * x_prev as f64)
                        + crate::model::special::poisson_ln_pmf(b, beta * x_prev as f64))
                    .exp();
                }
            }
        }
        let direct = latent_step_ln_pmf(x_prev, x_next, beta, &r) - (1.0 - lost).ln()
            + crate::model::coal_slice_ln_pmf(4, 2, beta, x_next).unwrap()
            + obs_ln_pmf(5, x_next, rho)
            - ln_q;
        assert!((w - direct).abs() < 1e-12);
        assert_eq!(
            step_log_weight(x_prev, 3, beta, &r, Some(5), rho, 0, 0, 0.0),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn prior_proposal_without_data_has_zero_weight() {
        let r = rates();
        let q = PrevalenceProposal::new(40, 0.2, &r, None, 0.5, None);
        let w = step_log_weight(40, 43, 0.2, &r, None, 0.5, 0, 0, q.ln_density(43));
        assert!(w.abs() < 1e-12);
    }

    #[test]
    fn impossible_observation_degenerates() {
        let obs = ObservedSeries::new(vec![Some(10_000), Some(1)]);
        let data = SmcData::new(obs, DailyLineages::default()).unwrap();
        let mut cfg = SmcConfig::new(20);
        cfg.x_max = Some(50);
        let est = run_smc(&Theta::new(0.05, 0.5, 2).unwrap(), &rates(), &data, &cfg, 1).unwrap();
        assert!(est.degenerate);
        assert_eq!(est.log_likelihood, f64::NEG_INFINITY);
    }

    #[test]
    fn result_independent_of_thread_count() {
        let obs = ObservedSeries::new(vec![Some(1), None, Some(2), Some(4), Some(3)]);
        let lin = DailyLineages { a: vec![0, 0, 2, 3, 2], c: vec![0, 0, 1, 0, 0] };
        let data = SmcData::new(obs, lin).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_smc(&Theta::new(0.05, 0.3, 4).unwrap(), &rates(), &data, &SmcConfig::new(300), 9).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn rejects_bad_inputs() {
        let lin = DailyLineages { a: vec![2], c: vec![2] };
        assert!(SmcData::new(ObservedSeries::default(), lin).is_err());
        let data = SmcData::new(ObservedSeries::missing(3), DailyLineages::default()).unwrap();
        let mut cfg = SmcConfig::new(10);
        cfg.ess_threshold = 0.0;
        assert!(run_smc(&theta(), &rates(), &data, &cfg, 1).is_err());
        let mut cfg = SmcConfig::new(10);
        cfg.fixed_beta = Some(vec![0.2; 2]);
        assert!(run_smc(&theta(), &rates(), &data, &cfg, 1).is_err());
    }
}
