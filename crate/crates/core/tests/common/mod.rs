//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

pub mod oracles;

use rt_pmcmc::model::{ObservedSeries, Theta};
use rt_pmcmc::phylo::DailyLineages;
use rt_pmcmc::smc::{SmcConfig, SmcData};

/// Ten-leaf dated tree whose day slices give the worked-example table
/// a = (2,4,6,7,8,5,3,3,2), c = (0,1,0,1,3,2,0,1,1).
pub const FIGURE_TREE: &str = "(((L5:2.2,L6:2.2):1.3,(L7:2.4,L8:1.4):1.1):2.8,\
    ((L9:0.6,L10:0.6):2.7,((L1:1.5,L2:1.5):3.8,(L3:2.3,L4:2.3):1.8):2.2):1.0);";

/// Truncated state space used by the small fixed-β model.
pub const X_MAX: u64 = 30;

/// A three-day problem with known birth rates, reports and a small genealogy.
pub struct TinyModel {
    pub theta: Theta,
    pub gamma: f64,
    pub beta: Vec<f64>,
    pub y: Vec<Option<u64>>,
    pub a: Vec<u64>,
    pub c: Vec<u64>,
}

impl TinyModel {
    pub fn standard() -> Self {
        TinyModel {
            theta: Theta::new(0.05, 0.3, 5).unwrap(),
            gamma: 0.1,
            beta: vec![0.3, 0.25, 0.2],
            y: vec![Some(2), None, Some(3)],
            a: vec![2, 3, 2],
            c: vec![1, 1, 0],
        }
    }

    pub fn data(&self) -> SmcData {
        SmcData::new(
            ObservedSeries::new(self.y.clone()),
            DailyLineages { a: self.a.clone(), c: self.c.clone() },
        )
        .unwrap()
    }

    pub fn config(&self, particles: usize) -> SmcConfig {
        SmcConfig {
            fixed_beta: Some(self.beta.clone()),
            x_max: Some(X_MAX),
            ..SmcConfig::new(particles)
        }
    }

    /// Exact likelihood by the forward algorithm on `0..=X_MAX`.
    pub fn exact_likelihood(&self) -> f64 {
        ForwardOracle::new(self).likelihood(self.theta.x0, self.theta.rho)
    }
}

/// Forward algorithm with the transition matrices built once, so the
/// likelihood can be evaluated cheaply for many (x₀, ρ).
pub struct ForwardOracle {
    rows: Vec<Vec<Vec<f64>>>,
    beta: Vec<f64>,
    y: Vec<Option<u64>>,
    a: Vec<u64>,
    c: Vec<u64>,
}

impl ForwardOracle {
    pub fn new(model: &TinyModel) -> Self {
        let rows = model
            .beta
            .iter()
            .map(|&b| (0..=X_MAX).map(|x| transition_row(x, b, model.gamma)).collect())
            .collect();
        ForwardOracle {
            rows,
            beta: model.beta.clone(),
            y: model.y.clone(),
            a: model.a.clone(),
            c: model.c.clone(),
        }
    }

    pub fn likelihood(&self, x0: u64, rho: f64) -> f64 {
        let states = X_MAX as usize + 1;
        if x0 > X_MAX {
            return 0.0;
        }
        let mut alpha = vec![0.0; states];
        alpha[x0 as usize] = 1.0;
        for n in 0..self.beta.len() {
            let mut next = vec![0.0; states];
            for (x, &m) in alpha.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                for (xn, p) in self.rows[n][x].iter().enumerate() {
                    next[xn] += m * p;
                }
            }
            for (x, v) in next.iter_mut().enumerate() {
                *v *= emission(x as u64, self.y[n], rho, self.a[n], self.c[n], self.beta[n]);
            }
            alpha = next;
        }
        alpha.iter().sum()
    }
}

/// Poisson probabilities `0..len` by recurrence.
pub fn poisson_table(mu: f64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut p = (-mu).exp();
    for j in 0..len {
        if j > 0 {
            p *= mu / j as f64;
        }
        out.push(p);
    }
    out
}

/// Skellam step from `x` renormalised over `0..=X_MAX`, by direct convolution.
pub fn transition_row(x: u64, beta: f64, gamma: f64) -> Vec<f64> {
    let states = X_MAX as usize + 1;
    let mut row = vec![0.0; states];
    if x == 0 {
        row[0] = 1.0;
        return row;
    }
    let len = 300;
    let births = poisson_table(beta * x as f64, len);
    let deaths = poisson_table(gamma * x as f64, len);
    for (b, pb) in births.iter().enumerate() {
        for (d, pd) in deaths.iter().enumerate() {
            let xn = x as i64 + b as i64 - d as i64;
            if (0..states as i64).contains(&xn) {
                row[xn as usize] += pb * pd;
            }
        }
    }
    let z: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= z);
    row
}

fn choose(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

fn binomial(k: u64, n: u64, p: f64) -> f64 {
    choose(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

/// Observation and coalescent factors for one day.
pub fn emission(x: u64, y: Option<u64>, rho: f64, a: u64, c: u64, beta: f64) -> f64 {
    let obs = y.map_or(1.0, |y| if y > x { 0.0 } else { binomial(y, x, rho) });
    let coal = if a < 2 {
        if c == 0 { 1.0 } else { 0.0 }
    } else if x < a {
        0.0
    } else {
        binomial(c, a * (a - 1) / 2, 1.0 - (-2.0 * beta / x as f64).exp())
    };
    obs * coal
}

/// Mean and standard error of `exp(values)`.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let v: Vec<f64> = values.iter().map(|l| l.exp()).collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
