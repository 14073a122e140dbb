use rand::Rng;

use crate::model::special::log_sum_exp;

/// Raised when no particle carries positive weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DegenerateWeights;

/// Normalise log-weights. Returns the weights and the log of their sum, or
/// `None` if every weight is zero.
pub fn normalize_log_weights(log_w: &[f64]) -> Option<(Vec<f64>, f64)> {
    let total = log_sum_exp(log_w);
    if !total.is_finite() {
        return None;
    }
    Some((log_w.iter().map(|&l| (l - total).exp()).collect(), total))
}

/// Effective sample size `1 / Σ W²` of normalised weights.
pub fn ess(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().map(|w| w * w).sum();
    1.0 / s
}

/// Index of the last particle with positive weight, used to guard against
/// cumulative sums that fall short of one by rounding.
fn last_positive(weights: &[f64]) -> Option<usize> {
    weights.iter().rposition(|&w| w > 0.0)
}

/// Map sorted points in `[0, 1)` onto ancestor indices.
fn select_sorted(weights: &[f64], points: impl Iterator<Item = f64>) -> Result<Vec<usize>, DegenerateWeights> {
    let last = last_positive(weights).ok_or(DegenerateWeights)?;
    let mut out = Vec::with_capacity(weights.len());
    let mut j = 0usize;
    let mut cum = weights[0];
    for u in points {
        while u >= cum && j < last {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
    Ok(out)
}

/// Systematic resampling with a given first point `u1 ∈ [0, 1/K)`.
pub fn systematic_resample_with(weights: &[f64], u1: f64) -> Result<Vec<usize>, DegenerateWeights> {
    let k = weights.len();
    let step = 1.0 / k as f64;
    select_sorted(weights, (0..k).map(|i| u1 + i as f64 * step))
}

/// Systematic resampling; output indices are sorted ascending.
pub fn systematic_resample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<Vec<usize>, DegenerateWeights> {
    let u1 = rng.random::<f64>() / weights.len() as f64;
    systematic_resample_with(weights, u1)
}

/// Multinomial resampling (independent draws), sorted ascending.
pub fn multinomial_resample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<Vec<usize>, DegenerateWeights> {
    let mut points: Vec<f64> = (0..weights.len()).map(|_| rng.random::<f64>()).collect();
    points.sort_by(f64::total_cmp);
    select_sorted(weights, points.into_iter())
}
