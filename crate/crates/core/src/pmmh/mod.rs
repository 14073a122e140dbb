//! Particle marginal Metropolis–Hastings over θ = (σ, ρ, x₀) with adaptive
//! scaling within adaptive Metropolis.

pub mod adapt;
pub mod proposal;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{theta_ln_prior, FixedRates, LatentPath, PriorConfig, Theta};
use crate::smc::{backward_simulate, run_smc, SmcConfig, SmcData, SmcError, SmcEstimate};

pub use adapt::AdaptiveState;
pub use proposal::{log_jacobian, propose_theta, to_unconstrained, Matrix3, ThetaProposal};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PmmhError {
    #[error("invalid chain configuration: {0}")]
    InvalidConfig(String),
    #[error("the likelihood estimate is degenerate at the initial θ {0:?}; try a different starting point or more particles")]
    DegenerateInitialization(Theta),
    #[error(transparent)]
    Smc(#[from] SmcError),
}

/// Source of (possibly noisy) log-likelihood values and latent paths.
pub trait LikelihoodEstimator {
    type Run;

    /// Estimate at `theta`, using `seed` for all internal randomness.
    fn run(&mut self, theta: &Theta, seed: u64) -> Result<Self::Run, PmmhError>;

    /// Log-likelihood of a run; `-∞` marks a degenerate run.
    fn log_likelihood(&self, run: &Self::Run) -> f64;

    /// Draw a latent path attached to an accepted run.
    fn sample_path(&self, run: &Self::Run, theta: &Theta, rng: &mut ChaCha8Rng) -> Result<LatentPath, PmmhError>;

    fn n_days(&self) -> usize;
}

/// The particle filter as a likelihood estimator.
#[derive(Debug, Clone)]
pub struct SmcEstimator {
    pub rates: FixedRates,
    pub data: SmcData,
    pub config: SmcConfig,
}

impl LikelihoodEstimator for SmcEstimator {
    type Run = SmcEstimate;

    fn run(&mut self, theta: &Theta, seed: u64) -> Result<SmcEstimate, PmmhError> {
        Ok(run_smc(theta, &self.rates, &self.data, &self.config, seed)?)
    }

    fn log_likelihood(&self, run: &SmcEstimate) -> f64 {
        run.log_likelihood
    }

    fn sample_path(&self, run: &SmcEstimate, theta: &Theta, rng: &mut ChaCha8Rng) -> Result<LatentPath, PmmhError> {
        Ok(backward_simulate(&run.history, theta, &self.rates, rng)?)
    }

    fn n_days(&self) -> usize {
        self.data.n_days()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub init_theta: Theta,
    #[serde(default = "default_target")]
    pub target_acceptance: f64,
    #[serde(default = "default_decay")]
    pub adaptation_decay: f64,
    /// Initial proposal standard deviations in `(ln σ, logit ρ, ln x₀)`.
    #[serde(default = "default_initial_sd")]
    pub initial_sd: [f64; 3],
    #[serde(default = "default_true")]
    pub adapt: bool,
    pub seed: u64,
}

fn default_target() -> f64 {
    0.10
}
fn default_decay() -> f64 {
    0.66
}
fn default_initial_sd() -> [f64; 3] {
    [0.1, 0.1, 0.1]
}
fn default_true() -> bool {
    true
}

impl ChainConfig {
    pub fn new(iterations: usize, init_theta: Theta, seed: u64) -> Self {
        ChainConfig {
            iterations,
            init_theta,
            target_acceptance: default_target(),
            adaptation_decay: default_decay(),
            initial_sd: default_initial_sd(),
            adapt: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), PmmhError> {
        let bad = |m: String| Err(PmmhError::InvalidConfig(m));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return bad(format!("target acceptance {} outside (0, 1)", self.target_acceptance));
        }
        if !(self.adaptation_decay > 0.5 && self.adaptation_decay <= 1.0) {
            return bad(format!("adaptation decay {} outside (0.5, 1]", self.adaptation_decay));
        }
        if self.initial_sd.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return bad("initial proposal standard deviations must be positive".into());
        }
        self.init_theta
            .validate()
            .map_err(|e| PmmhError::InvalidConfig(e.to_string()))
    }
}

/// Chain trace. `beta` and `x` are row-major `iterations × n_days` matrices
/// holding the latent path attached to each stored state (days `1..=N`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub n_days: usize,
    pub sigma: Vec<f64>,
    pub rho: Vec<f64>,
    pub x0: Vec<u64>,
    pub log_lik: Vec<f64>,
    pub accepted: Vec<bool>,
    pub beta: Vec<f64>,
    pub x: Vec<u64>,
    pub final_scale: f64,
    pub final_covariance: Matrix3,
    /// Times the adapted covariance needed diagonal jitter.
    pub jitter_events: usize,
    /// Number of likelihood estimates computed, including the initial one.
    pub estimator_calls: usize,
}

impl ChainOutput {
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn beta_row(&self, i: usize) -> &[f64] {
        &self.beta[i * self.n_days..(i + 1) * self.n_days]
    }

    pub fn x_row(&self, i: usize) -> &[u64] {
        &self.x[i * self.n_days..(i + 1) * self.n_days]
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.accepted.is_empty() {
            return 0.0;
        }
        self.accepted.iter().filter(|&&a| a).count() as f64 / self.accepted.len() as f64
    }

    pub fn theta(&self, i: usize) -> Theta {
        Theta {
            sigma: self.sigma[i],
            rho: self.rho[i],
            x0: self.x0[i],
        }
    }
}

/// Number of fresh seeds tried for the initial likelihood estimate.
const INIT_ATTEMPTS: usize = 5;

/// Run the chain with any likelihood estimator.
pub fn run_chain<E: LikelihoodEstimator>(
    estimator: &mut E,
    config: &ChainConfig,
    prior: &PriorConfig,
) -> Result<ChainOutput, PmmhError> {
    config.validate()?;
    prior
        .validate()
        .map_err(|e| PmmhError::InvalidConfig(e.to_string()))?;
    let n_days = estimator.n_days();
    let iters = config.iterations;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut theta = config.init_theta;
    let mut ln_prior = theta_ln_prior(&theta, prior);
    if !ln_prior.is_finite() {
        return Err(PmmhError::InvalidConfig(format!(
            "initial θ {theta:?} has zero prior density"
        )));
    }
    let mut calls = 0;
    let mut init = None;
    for _ in 0..INIT_ATTEMPTS {
        let run = estimator.run(&theta, rng.random())?;
        calls += 1;
        if estimator.log_likelihood(&run).is_finite() {
            init = Some(run);
            break;
        }
    }
    let init = init.ok_or(PmmhError::DegenerateInitialization(theta))?;
    let mut ln_lik = estimator.log_likelihood(&init);
    let mut path = estimator.sample_path(&init, &theta, &mut rng)?;
    drop(init);

    let mut out = ChainOutput {
        n_days,
        sigma: Vec::with_capacity(iters),
        rho: Vec::with_capacity(iters),
        x0: Vec::with_capacity(iters),
        log_lik: Vec::with_capacity(iters),
        accepted: Vec::with_capacity(iters),
        beta: Vec::with_capacity(iters * n_days),
        x: Vec::with_capacity(iters * n_days),
        final_scale: 0.0,
        final_covariance: [[0.0; 3]; 3],
        jitter_events: 0,
        estimator_calls: 0,
    };
    let mut adaptive = AdaptiveState::new(
        to_unconstrained(&theta),
        config.initial_sd,
        config.target_acceptance,
        config.adaptation_decay,
    );

    for i in 1..=iters {
        let factor = adaptive.factor();
        let prop = proposal::propose_theta_with_factor(&theta, &factor, adaptive.scale(), &mut rng);
        let seed: u64 = rng.random();
        let u: f64 = rng.random();
        let prop_prior = theta_ln_prior(&prop.theta, prior);

        let mut alpha = 0.0;
        let mut accepted = false;
        if prop_prior.is_finite() && prop.log_ratio.is_finite() {
            let run = estimator.run(&prop.theta, seed)?;
            calls += 1;
            let prop_lik = estimator.log_likelihood(&run);
            if prop_lik.is_finite() {
                let ln_r = prop_lik - ln_lik + prop_prior - ln_prior + prop.log_ratio;
                alpha = if ln_r >= 0.0 { 1.0 } else { ln_r.exp() };
                if u < alpha {
                    accepted = true;
                    path = estimator.sample_path(&run, &prop.theta, &mut rng)?;
                    theta = prop.theta;
                    ln_lik = prop_lik;
                    ln_prior = prop_prior;
                }
            }
        }
        if config.adapt {
            adaptive.update(i, alpha, &to_unconstrained(&theta));
        }

        out.sigma.push(theta.sigma);
        out.rho.push(theta.rho);
        out.x0.push(theta.x0);
        out.log_lik.push(ln_lik);
        out.accepted.push(accepted);
        out.beta.extend_from_slice(&path.beta);
        out.x.extend_from_slice(&path.x[1..]);
    }
    out.final_scale = adaptive.scale();
    out.final_covariance = adaptive.covariance();
    out.jitter_events = adaptive.jitter_events();
    out.estimator_calls = calls;
    Ok(out)
}

/// PMMH with the particle filter as likelihood estimator.
pub fn run_pmmh(
    config: &ChainConfig,
    rates: &FixedRates,
    data: &SmcData,
    smc: &SmcConfig,
    prior: &PriorConfig,
) -> Result<ChainOutput, PmmhError> {
    let mut estimator = SmcEstimator {
        rates: *rates,
        data: data.clone(),
        config: smc.clone(),
    };
    run_chain(&mut estimator, config, prior)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Deterministic likelihood that counts its calls.
    struct Counting {
        calls: usize,
        f: fn(&Theta) -> f64,
    }

    impl LikelihoodEstimator for Counting {
        type Run = f64;
        fn run(&mut self, theta: &Theta, _seed: u64) -> Result<f64, PmmhError> {
            self.calls += 1;
            Ok((self.f)(theta))
        }
        fn log_likelihood(&self, run: &f64) -> f64 {
            *run
        }
        fn sample_path(&self, _run: &f64, theta: &Theta, _rng: &mut ChaCha8Rng) -> Result<LatentPath, PmmhError> {
            Ok(LatentPath { beta: vec![theta.sigma; 2], x: vec![theta.x0; 3] })
        }
        fn n_days(&self) -> usize {
            2
        }
    }

    #[test]
    fn rejected_states_are_not_re_estimated() {
        let mut est = Counting { calls: 0, f: |t| -((t.rho - 0.3) / 0.05).powi(2) };
        let cfg = ChainConfig::new(2000, Theta::new(0.1, 0.3, 3).unwrap(), 4);
        let out = run_chain(&mut est, &cfg, &PriorConfig::default()).unwrap();
        // One call for the initial state plus one per proposal that has
        // positive prior density; never one for the retained state.
        assert_eq!(out.estimator_calls, est.calls);
        assert!(est.calls <= cfg.iterations + 1);
        let accepted = out.accepted.iter().filter(|&&a| a).count();
        assert!(accepted > 0 && accepted < cfg.iterations);
    }

    #[test]
    fn stored_values_stay_in_support() {
        let mut est = Counting { calls: 0, f: |_| 0.0 };
        let cfg = ChainConfig::new(3000, Theta::new(0.05, 0.9, 1).unwrap(), 8);
        let out = run_chain(&mut est, &cfg, &PriorConfig::default()).unwrap();
        assert!(out.sigma.iter().all(|&s| s > 0.0));
        assert!(out.rho.iter().all(|&r| r > 0.0 && r <= 1.0));
        assert!(out.x0.iter().all(|&x| x >= 1));
        for i in 0..out.len() {
            assert_eq!(out.beta_row(i), &[out.sigma[i]; 2]);
        }
    }

    #[test]
    fn degenerate_start_is_reported() {
        let mut est = Counting { calls: 0, f: |_| f64::NEG_INFINITY };
        let cfg = ChainConfig::new(10, Theta::new(0.05, 0.5, 2).unwrap(), 1);
        assert!(matches!(
            run_chain(&mut est, &cfg, &PriorConfig::default()),
            Err(PmmhError::DegenerateInitialization(_))
        ));
    }

    #[test]
    fn same_seed_same_chain() {
        let run = || {
            let mut est = Counting { calls: 0, f: |t| -(t.sigma - 0.1).powi(2) * 100.0 };
            run_chain(&mut est, &ChainConfig::new(500, Theta::new(0.1, 0.5, 2).unwrap(), 42), &PriorConfig::default())
                .unwrap()
        };
        assert_eq!(run(), run());
    }
}
