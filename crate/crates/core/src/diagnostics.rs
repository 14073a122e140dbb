//! Posterior summaries, chain health and scoring against a known truth.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::FixedRates;
use crate::pmmh::ChainOutput;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("chain is empty")]
    EmptyChain,
    #[error("burn-in fraction {0} outside [0, 1)")]
    InvalidBurnIn(f64),
    #[error("summary covers {summary} days but the truth has {truth}")]
    LengthMismatch { summary: usize, truth: usize },
}

/// Type-7 (linear interpolation) quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn from_samples(values: &mut [f64]) -> Self {
        values.sort_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        // Round-off can push a sum of identical values past them; keep the
        // mean inside the sample range.
        let lo = quantile_sorted(values, 0.025);
        let hi = quantile_sorted(values, 0.975);
        Interval {
            mean: mean.clamp(values[0], values[values.len() - 1]),
            lo,
            hi,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Interval {
            mean: self.mean * factor,
            lo: self.lo * factor,
            hi: self.hi * factor,
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySummary {
    pub day: usize,
    pub beta: Interval,
    pub rt: Interval,
    pub x: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub burn_in: usize,
    pub samples: usize,
    pub days: Vec<DaySummary>,
    pub sigma: Interval,
    pub rho: Interval,
    pub x0: Interval,
    pub acceptance_rate: f64,
}

/// Per-day and scalar posterior summaries after discarding the first
/// `burn_in_fraction` of iterations.
pub fn summarize(chain: &ChainOutput, rates: &FixedRates, burn_in_fraction: f64) -> Result<PosteriorSummary, DiagnosticsError> {
    if chain.is_empty() {
        return Err(DiagnosticsError::EmptyChain);
    }
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(DiagnosticsError::InvalidBurnIn(burn_in_fraction));
    }
    let burn_in = ((chain.len() as f64 * burn_in_fraction).floor() as usize).min(chain.len() - 1);
    let kept = burn_in..chain.len();
    let n = chain.n_days;
    let days = (0..n)
        .map(|d| {
            let mut b: Vec<f64> = kept.clone().map(|i| chain.beta[i * n + d]).collect();
            let mut x: Vec<f64> = kept.clone().map(|i| chain.x[i * n + d] as f64).collect();
            let beta = Interval::from_samples(&mut b);
            DaySummary {
                day: d + 1,
                beta,
                rt: beta.scaled(1.0 / rates.gamma),
                x: Interval::from_samples(&mut x),
            }
        })
        .collect();
    let scalar = |v: &dyn Fn(usize) -> f64| {
        let mut s: Vec<f64> = kept.clone().map(v).collect();
        Interval::from_samples(&mut s)
    };
    let accepted = chain.accepted[kept.clone()].iter().filter(|&&a| a).count();
    Ok(PosteriorSummary {
        burn_in,
        samples: kept.len(),
        days,
        sigma: scalar(&|i| chain.sigma[i]),
        rho: scalar(&|i| chain.rho[i]),
        x0: scalar(&|i| chain.x0[i] as f64),
        acceptance_rate: accepted as f64 / kept.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub rmse: f64,
    pub mean_ci_width: f64,
    pub coverage: f64,
}

/// RMSE of the posterior-mean β, mean 95% interval width, and the fraction
/// of days whose true β lies inside the interval.
pub fn score_vs_truth(summary: &PosteriorSummary, true_beta: &[f64]) -> Result<Score, DiagnosticsError> {
    if summary.days.len() != true_beta.len() {
        return Err(DiagnosticsError::LengthMismatch {
            summary: summary.days.len(),
            truth: true_beta.len(),
        });
    }
    let n = true_beta.len() as f64;
    let mut se = 0.0;
    let mut width = 0.0;
    let mut inside = 0usize;
    for (d, &t) in summary.days.iter().zip(true_beta) {
        se += (d.beta.mean - t).powi(2);
        width += d.beta.width();
        if d.beta.lo <= t && t <= d.beta.hi {
            inside += 1;
        }
    }
    Ok(Score {
        rmse: (se / n).sqrt(),
        mean_ci_width: width / n,
        coverage: inside as f64 / n,
    })
}

/// Effective sample size of a chain by Geyer's initial positive sequence.
/// A constant chain returns 1.
pub fn chain_ess(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return n as f64;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let centred: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let autocov = |lag: usize| -> f64 {
        centred[..n - lag]
            .iter()
            .zip(&centred[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n as f64
    };
    let g0 = autocov(0);
    if !(g0 > 0.0) {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = autocov(lag) + autocov(lag + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        lag += 2;
    }
    let tau = (2.0 * sum / g0 - 1.0).max(1.0 / n as f64);
    n as f64 / tau
}

/// Monte Carlo standard error of a chain mean.
pub fn monte_carlo_se(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (var / chain_ess(values)).sqrt()
}

/// Kolmogorov–Smirnov distance between samples and Uniform(0, 1).
pub fn ks_distance_uniform(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = v.clamp(0.0, 1.0);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainHealth {
    pub acceptance_rate: f64,
    pub ess_sigma: f64,
    pub ess_rho: f64,
    pub ess_x0: f64,
    /// Longest run of consecutive rejections.
    pub longest_sticky_run: usize,
    /// Set when no proposal was ever accepted.
    pub stuck: bool,
}

pub fn chain_health(chain: &ChainOutput) -> Result<ChainHealth, DiagnosticsError> {
    if chain.is_empty() {
        return Err(DiagnosticsError::EmptyChain);
    }
    let mut longest = 0;
    let mut run = 0;
    for &a in &chain.accepted {
        run = if a { 0 } else { run + 1 };
        longest = longest.max(run);
    }
    let x0: Vec<f64> = chain.x0.iter().map(|&v| v as f64).collect();
    let acceptance_rate = chain.acceptance_rate();
    Ok(ChainHealth {
        acceptance_rate,
        ess_sigma: chain_ess(&chain.sigma),
        ess_rho: chain_ess(&chain.rho),
        ess_x0: chain_ess(&x0),
        longest_sticky_run: longest,
        stuck: acceptance_rate == 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain_with(beta_rows: Vec<Vec<f64>>) -> ChainOutput {
        let n_days = beta_rows[0].len();
        let i = beta_rows.len();
        ChainOutput {
            n_days,
            sigma: vec![0.1; i],
            rho: vec![0.5; i],
            x0: vec![2; i],
            log_lik: vec![0.0; i],
            accepted: (0..i).map(|k| k % 2 == 0).collect(),
            beta: beta_rows.concat(),
            x: vec![5; i * n_days],
            final_scale: 1.0,
            final_covariance: [[0.0; 3]; 3],
            jitter_events: 0,
            estimator_calls: i,
        }
    }

    #[test]
    fn type7_quantile() {
        let v: Vec<f64> = (1..=100).map(|k| k as f64).collect();
        assert!((quantile_sorted(&v, 0.025) - 3.475).abs() < 1e-12);
        assert!((quantile_sorted(&v, 0.975) - 97.525).abs() < 1e-12);
    }

    #[test]
    fn constant_chain_has_zero_width() {
        let chain = chain_with(vec![vec![0.2, 0.3]; 50]);
        let s = summarize(&chain, &FixedRates { gamma: 0.1 }, 0.1).unwrap();
        assert_eq!(s.days[0].beta.mean, 0.2);
        assert_eq!(s.days[1].beta.width(), 0.0);
        assert!((s.days[1].rt.mean - 3.0).abs() < 1e-12);
        let score = score_vs_truth(&s, &[0.2, 0.3]).unwrap();
        assert_eq!(score.rmse, 0.0);
        assert_eq!(score.coverage, 1.0);
        assert!(score_vs_truth(&s, &[0.2]).is_err());
    }

    #[test]
    fn rt_is_beta_over_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random::<f64>(), rng.random()]).collect();
        let g = 0.25;
        let s = summarize(&chain_with(rows), &FixedRates { gamma: g }, 0.0).unwrap();
        for d in &s.days {
            assert_eq!(d.rt, d.beta.scaled(1.0 / g));
            assert!(d.beta.lo <= d.beta.mean && d.beta.mean <= d.beta.hi);
        }
    }

    #[test]
    fn permutation_invariant_after_burn_in() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.random::<f64>()]).collect();
        let mut shuffled = rows.clone();
        shuffled[10..].reverse();
        let r = FixedRates { gamma: 0.1 };
        let a = summarize(&chain_with(rows), &r, 0.1).unwrap();
        let b = summarize(&chain_with(shuffled), &r, 0.1).unwrap();
        assert!((a.days[0].beta.mean - b.days[0].beta.mean).abs() < 1e-12);
        assert_eq!(a.days[0].beta.lo, b.days[0].beta.lo);
    }

    #[test]
    fn health_of_alternating_chain() {
        let h = chain_health(&chain_with(vec![vec![0.1]; 10])).unwrap();
        assert_eq!(h.acceptance_rate, 0.5);
        assert_eq!(h.ess_sigma, 1.0);
        assert_eq!(h.longest_sticky_run, 1);
    }

    #[test]
    fn iid_ess_close_to_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let v: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
            let e = chain_ess(&v);
            assert!((e / 5000.0 - 1.0).abs() < 0.1, "{e}");
        }
    }

    #[test]
    fn ks_examples() {
        let grid: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_distance_uniform(&grid) < 0.001);
        assert!((ks_distance_uniform(&[0.01; 100]) - 0.99).abs() < 1e-12);
    }
}
