//! Particle-count selection by log-likelihood variance targeting.
//!
//! A short pilot chain locates a central θ̄; `R` independent filters at θ̄
//! with `K_s` particles give the variance σ̂² of the log-likelihood estimate,
//! and `K_opt = K_s · σ̂² / 0.92²`. The scheme is repeated and the largest
//! value kept, then clamped to `[floor, cap]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FixedRates, PriorConfig, Theta};
use crate::pmmh::{run_pmmh, ChainConfig, PmmhError};
use crate::smc::{run_smc, SmcConfig, SmcData};

/// Log-likelihood standard deviation that minimises pseudo-marginal cost.
pub const TARGET_SD: f64 = 0.92;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TuneError {
    #[error("invalid tuning specification: {0}")]
    InvalidSpec(String),
    #[error("every tuning repeat produced only degenerate likelihood estimates")]
    AllRepeatsDegenerate,
    #[error(transparent)]
    Pmmh(#[from] PmmhError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuneSpec {
    pub pilot_iterations: usize,
    pub k_large: usize,
    pub k_s: usize,
    pub replicates: usize,
    pub floor: usize,
    pub cap: usize,
    pub repeats: usize,
}

impl Default for TuneSpec {
    fn default() -> Self {
        TuneSpec {
            pilot_iterations: 500,
            k_large: 5000,
            k_s: 1000,
            replicates: 100,
            floor: 1000,
            cap: 25_000,
            repeats: 3,
        }
    }
}

impl TuneSpec {
    pub fn validate(&self) -> Result<(), TuneError> {
        let bad = |m: &str| Err(TuneError::InvalidSpec(m.to_string()));
        if self.floor > self.cap {
            return bad("floor exceeds cap");
        }
        if self.replicates < 2 {
            return bad("at least two replicates are needed for a variance");
        }
        if self.repeats == 0 || self.k_s == 0 || self.k_large == 0 || self.pilot_iterations == 0 {
            return bad("repeats, particle counts and pilot iterations must be positive");
        }
        Ok(())
    }
}

/// `K_s · σ̂² / 0.92²`.
pub fn k_opt_raw(k_s: usize, variance: f64) -> f64 {
    k_s as f64 * variance / (TARGET_SD * TARGET_SD)
}

/// Round and clamp to `[floor, cap]`; an infinite variance maps to the cap.
pub fn clamp_particles(raw: f64, floor: usize, cap: usize) -> usize {
    if raw.is_nan() || raw >= cap as f64 {
        return cap;
    }
    (raw.round().max(0.0) as usize).clamp(floor, cap)
}

/// Population variance (divisor `R`) by the two-pass formula. Any `-∞`
/// estimate makes the variance infinite.
pub fn log_likelihood_variance(values: &[f64]) -> f64 {
    if values.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatReport {
    pub theta_bar: Theta,
    pub variance: f64,
    pub k_opt_raw: f64,
    pub degenerate_runs: usize,
    pub discarded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub k_s: usize,
    pub repeats: Vec<RepeatReport>,
    pub k_opt_raw_max: f64,
    pub k_opt: usize,
}

/// The two expensive stages of tuning, separated so they can be replaced.
pub trait ParticleProbe {
    /// Posterior-mean estimate from a pilot chain.
    fn pilot_mean(&mut self, seed: u64) -> Result<Theta, TuneError>;
    /// `replicates` independent log-likelihood estimates at `theta`.
    fn replicate_log_likelihoods(&mut self, theta: &Theta, k_s: usize, replicates: usize, seed: u64) -> Vec<f64>;
}

/// Run the tuning scheme against any probe.
pub fn choose_particles_with<P: ParticleProbe>(spec: &TuneSpec, probe: &mut P, seed: u64) -> Result<TuneReport, TuneError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut repeats = Vec::with_capacity(spec.repeats);
    for _ in 0..spec.repeats {
        let theta_bar = probe.pilot_mean(rng.random())?;
        let values = probe.replicate_log_likelihoods(&theta_bar, spec.k_s, spec.replicates, rng.random());
        let degenerate_runs = values.iter().filter(|v| !v.is_finite()).count();
        let discarded = degenerate_runs == values.len();
        let variance = if discarded { f64::NAN } else { log_likelihood_variance(&values) };
        repeats.push(RepeatReport {
            theta_bar,
            variance,
            k_opt_raw: if discarded { f64::NAN } else { k_opt_raw(spec.k_s, variance) },
            degenerate_runs,
            discarded,
        });
    }
    let kept: Vec<f64> = repeats.iter().filter(|r| !r.discarded).map(|r| r.k_opt_raw).collect();
    if kept.is_empty() {
        return Err(TuneError::AllRepeatsDegenerate);
    }
    let k_opt_raw_max = kept.into_iter().fold(f64::NEG_INFINITY, f64::max);
    Ok(TuneReport {
        k_s: spec.k_s,
        repeats,
        k_opt_raw_max,
        k_opt: clamp_particles(k_opt_raw_max, spec.floor, spec.cap),
    })
}

/// Probe backed by the particle filter and a pilot PMMH chain.
pub struct SmcProbe<'a> {
    pub rates: FixedRates,
    pub data: &'a SmcData,
    pub prior: PriorConfig,
    pub smc: SmcConfig,
    pub init_theta: Theta,
    pub pilot_iterations: usize,
    pub k_large: usize,
}

impl ParticleProbe for SmcProbe<'_> {
    fn pilot_mean(&mut self, seed: u64) -> Result<Theta, TuneError> {
        let chain_cfg = ChainConfig::new(self.pilot_iterations, self.init_theta, seed);
        let mut smc = self.smc.clone();
        smc.particles = self.k_large;
        let chain = run_pmmh(&chain_cfg, &self.rates, self.data, &smc, &self.prior)?;
        let n = chain.len() as f64;
        let x0 = chain.x0.iter().map(|&v| v as f64).sum::<f64>() / n;
        Ok(Theta {
            sigma: chain.sigma.iter().sum::<f64>() / n,
            rho: chain.rho.iter().sum::<f64>() / n,
            x0: (x0.round() as u64).max(1),
        })
    }

    fn replicate_log_likelihoods(&mut self, theta: &Theta, k_s: usize, replicates: usize, seed: u64) -> Vec<f64> {
        let mut smc = self.smc.clone();
        smc.particles = k_s;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seeds: Vec<u64> = (0..replicates).map(|_| rng.random()).collect();
        seeds
            .par_iter()
            .map(|&s| {
                run_smc(theta, &self.rates, self.data, &smc, s)
                    .map(|e| e.log_likelihood)
                    .unwrap_or(f64::NEG_INFINITY)
            })
            .collect()
    }
}

/// Choose the particle count for a problem.
#[allow(clippy::too_many_arguments)]
pub fn choose_particles(
    spec: &TuneSpec,
    rates: &FixedRates,
    data: &SmcData,
    prior: &PriorConfig,
    smc: &SmcConfig,
    init_theta: Theta,
    seed: u64,
) -> Result<TuneReport, TuneError> {
    let mut probe = SmcProbe {
        rates: *rates,
        data,
        prior: *prior,
        smc: smc.clone(),
        init_theta,
        pilot_iterations: spec.pilot_iterations,
        k_large: spec.k_large,
    };
    choose_particles_with(spec, &mut probe, seed)
}
