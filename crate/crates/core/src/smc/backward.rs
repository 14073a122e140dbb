use std::collections::HashMap;

use rand::Rng;

use super::resample::normalize_log_weights;
use super::{ParticleHistory, SmcError};
use super::proposal::restricted_transition_ln_pmf;
use crate::model::{folded_normal_ln_pdf, FixedRates, LatentPath, Theta};

fn draw_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>();
    let mut cum = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            cum += w;
            last = i;
            if u < cum {
                return i;
            }
        }
    }
    last
}

fn final_weights(history: &ParticleHistory) -> Result<Vec<f64>, SmcError> {
    let n = history.n_days();
    normalize_log_weights(&history.log_w[history.row(n)])
        .map(|(w, _)| w)
        .ok_or(SmcError::DegenerateHistory)
}

/// Normalised backward-smoothing weights over the particles of `day`, given
/// the state `(beta_next, x_next)` already chosen for `day + 1`.
pub fn smoothing_weights(
    history: &ParticleHistory,
    theta: &Theta,
    rates: &FixedRates,
    day: usize,
    beta_next: f64,
    x_next: u64,
) -> Result<Vec<f64>, SmcError> {
    let row = history.row(day);
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let log_s: Vec<f64> = row
        .map(|i| {
            let lw = history.log_w[i];
            if lw == f64::NEG_INFINITY {
                return lw;
            }
            let x = history.x[i];
            let step = *cache
                .entry(x)
                .or_insert_with(|| restricted_transition_ln_pmf(x, x_next, beta_next, rates, history.x_max));
            let drift = if history.fixed_beta {
                0.0
            } else {
                folded_normal_ln_pdf(beta_next, history.beta[i], theta.sigma)
            };
            lw + step + drift
        })
        .collect();
    normalize_log_weights(&log_s)
        .map(|(w, _)| w)
        .ok_or(SmcError::DegenerateHistory)
}

/// Sample one trajectory from the smoothing distribution by a backward pass
/// over the stored filter.
pub fn backward_simulate<R: Rng + ?Sized>(
    history: &ParticleHistory,
    theta: &Theta,
    rates: &FixedRates,
    rng: &mut R,
) -> Result<LatentPath, SmcError> {
    let n = history.n_days();
    let mut beta = vec![0.0; n];
    let mut x = vec![history.x0; n + 1];
    if n == 0 {
        return Ok(LatentPath { beta, x });
    }
    let k = history.particles;
    let mut j = draw_index(&final_weights(history)?, rng);
    beta[n - 1] = history.beta[(n - 1) * k + j];
    x[n] = history.x[(n - 1) * k + j];
    for day in (1..n).rev() {
        let w = smoothing_weights(history, theta, rates, day, beta[day], x[day + 1])?;
        j = draw_index(&w, rng);
        beta[day - 1] = history.beta[(day - 1) * k + j];
        x[day] = history.x[(day - 1) * k + j];
    }
    Ok(LatentPath { beta, x })
}

/// Sample a final particle and follow its ancestry back to day 1.
pub fn trace_genealogy<R: Rng + ?Sized>(history: &ParticleHistory, rng: &mut R) -> Result<LatentPath, SmcError> {
    let n = history.n_days();
    let mut beta = vec![0.0; n];
    let mut x = vec![history.x0; n + 1];
    if n == 0 {
        return Ok(LatentPath { beta, x });
    }
    let k = history.particles;
    let mut j = draw_index(&final_weights(history)?, rng);
    for day in (1..=n).rev() {
        let i = (day - 1) * k + j;
        beta[day - 1] = history.beta[i];
        x[day] = history.x[i];
        j = history.ancestor[i] as usize;
    }
    Ok(LatentPath { beta, x })
}
