//! Forward simulation of epidemics, reporting and sampled genealogies.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{pairs, FixedRates, MAX_PREVALENCE, LatentPath, ObservedSeries};
use crate::phylo::{align_to_epidemic, DailyLineages, DatedTree, TreeNode, TreeSlices};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("day {day}: cannot sample {leaves} leaves from a prevalence of {prevalence}")]
    InfeasibleSampling {
        day: usize,
        leaves: u64,
        prevalence: u64,
    },
    #[error("epidemic went extinct in all {attempts} attempts")]
    ScenarioInfeasible { attempts: usize },
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
}

pub(crate) fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    if !(lambda < MAX_PREVALENCE as f64) {
        return MAX_PREVALENCE;
    }
    let v: f64 = Poisson::new(lambda).expect("finite positive Poisson rate").sample(rng);
    (v as u64).min(MAX_PREVALENCE)
}

pub(crate) fn sample_binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Birth-rate trajectory families used by the validation scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaSchedule {
    Constant { level: f64 },
    /// Linear rise from `low` to `high` at mid-epidemic, then back to `low`.
    Peaked { low: f64, high: f64 },
    /// `before` up to day `day - 1`, `after` from `day` on.
    Changepoint { before: f64, after: f64, day: usize },
}

impl BetaSchedule {
    /// Per-day birth rates for days `1..=n_days`.
    pub fn expand(&self, n_days: usize) -> Vec<f64> {
        match *self {
            BetaSchedule::Constant { level } => vec![level; n_days],
            BetaSchedule::Peaked { low, high } => {
                let mid = n_days as f64 / 2.0;
                (1..=n_days)
                    .map(|n| {
                        let t = n as f64;
                        let frac = if t <= mid { t / mid } else { (n_days as f64 - t) / mid };
                        low + (high - low) * frac
                    })
                    .collect()
            }
            BetaSchedule::Changepoint { before, after, day } => (1..=n_days)
                .map(|n| if n < day { before } else { after })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n_days: usize,
    pub beta_schedule: BetaSchedule,
    pub gamma: f64,
    pub x0: u64,
    pub rho: f64,
    pub genetic_sampling_fraction: f64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
}

fn default_max_attempts() -> usize {
    1000
}

impl ScenarioSpec {
    /// Forty-day epidemic with `R_t` rising linearly from 1 to 3 and back.
    pub fn peaked(rho: f64, genetic_sampling_fraction: f64) -> Self {
        ScenarioSpec {
            n_days: 40,
            beta_schedule: BetaSchedule::Peaked { low: 0.1, high: 0.3 },
            gamma: 0.1,
            x0: 1,
            rho,
            genetic_sampling_fraction,
            max_attempts: default_max_attempts(),
        }
    }

    /// Constant birth rate 0.3 with 5% reporting, used for path-degeneracy runs.
    pub fn constant_reference() -> Self {
        ScenarioSpec {
            n_days: 40,
            beta_schedule: BetaSchedule::Constant { level: 0.3 },
            gamma: 0.1,
            x0: 1,
            rho: 0.05,
            genetic_sampling_fraction: 0.0,
            max_attempts: default_max_attempts(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidSpec(m.to_string()));
        if self.n_days == 0 {
            return bad("n_days must be at least 1");
        }
        if !(self.gamma > 0.0) {
            return bad("gamma must be positive");
        }
        if self.x0 < 1 {
            return bad("x0 must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad("rho must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.genetic_sampling_fraction) {
            return bad("genetic_sampling_fraction must lie in [0, 1]");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be at least 1");
        }
        if self.beta_schedule.expand(self.n_days).iter().any(|b| !(*b >= 0.0)) {
            return bad("birth rates must be non-negative");
        }
        Ok(())
    }
}

/// Forward-simulate the discrete-time birth-death process, clamping at zero.
/// Returns the path and whether the epidemic went extinct.
pub fn simulate_epidemic<R: Rng + ?Sized>(
    beta: &[f64],
    rates: &FixedRates,
    x0: u64,
    rng: &mut R,
) -> (LatentPath, bool) {
    let mut x = Vec::with_capacity(beta.len() + 1);
    x.push(x0);
    let mut extinct = x0 == 0;
    let mut current = x0;
    for &b in beta {
        if current > 0 {
            let xf = current as f64;
            let births = sample_poisson(rng, b * xf);
            let deaths = sample_poisson(rng, rates.gamma * xf);
            current = (current + births).saturating_sub(deaths);
            if current == 0 {
                extinct = true;
            }
        }
        x.push(current);
    }
    (
        LatentPath {
            beta: beta.to_vec(),
            x,
        },
        extinct,
    )
}

/// Binomial thinning of the latent prevalence on days `1..=N`.
pub fn simulate_observations<R: Rng + ?Sized>(
    path: &LatentPath,
    rho: f64,
    rng: &mut R,
) -> ObservedSeries {
    ObservedSeries::new(
        path.x[1..]
            .iter()
            .map(|&x| Some(sample_binomial(rng, x, rho)))
            .collect(),
    )
}

/// A simulated genealogy together with the simulator's own slice records.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTree {
    /// Day `n` sits at time `n`; the present is time `N`.
    pub tree: DatedTree,
    /// Lineage/coalescence counts per slice, day-0-first from the present.
    pub slices: TreeSlices,
    /// Lineages survived past day 1 and were joined on day 0.
    pub forced_root: bool,
    /// Draws that exceeded `a - 1` coalescences and were capped.
    pub capped_days: usize,
}

/// Simulate a genealogy backwards in time over the latent path. `leaf_days`
/// is a multiset of sampling days in `1..=N`.
pub fn simulate_tree<R: Rng + ?Sized>(
    path: &LatentPath,
    beta: &[f64],
    leaf_days: &[usize],
    rng: &mut R,
) -> Result<SimTree, SimError> {
    let n_days = beta.len();
    let mut per_day = vec![0u64; n_days + 1];
    for &d in leaf_days {
        if d == 0 || d > n_days {
            return Err(SimError::InvalidSpec(format!("leaf day {d} outside 1..={n_days}")));
        }
        per_day[d] += 1;
    }
    for d in 1..=n_days {
        if per_day[d] > path.x[d] {
            return Err(SimError::InfeasibleSampling {
                day: d,
                leaves: per_day[d],
                prevalence: path.x[d],
            });
        }
    }

    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut lineages: Vec<usize> = Vec::new();
    let mut a_rec = vec![0u64; n_days + 1];
    let mut c_rec = vec![0u64; n_days + 1];
    let mut capped_days = 0;
    let mut leaf_counter = 0usize;

    let merge = |nodes: &mut Vec<TreeNode>, lineages: &mut Vec<usize>, time: f64, rng: &mut R| {
        let i = rng.random_range(0..lineages.len());
        let left = lineages.swap_remove(i);
        let j = rng.random_range(0..lineages.len());
        let right = lineages.swap_remove(j);
        let id = nodes.len();
        nodes.push(TreeNode {
            label: None,
            parent: None,
            children: vec![left, right],
            time,
        });
        nodes[left].parent = Some(id);
        nodes[right].parent = Some(id);
        lineages.push(id);
    };

    for n in (1..=n_days).rev() {
        for _ in 0..per_day[n] {
            leaf_counter += 1;
            nodes.push(TreeNode {
                label: Some(format!("t{leaf_counter}")),
                parent: None,
                children: Vec::new(),
                time: n as f64,
            });
            lineages.push(nodes.len() - 1);
        }
        let a = lineages.len() as u64;
        a_rec[n] = a;
        if a < 2 {
            continue;
        }
        let x = path.x[n];
        let p = if x == 0 {
            1.0
        } else {
            -(-2.0 * beta[n - 1] / x as f64).exp_m1()
        };
        let mut c = sample_binomial(rng, pairs(a), p);
        if c > a - 1 {
            c = a - 1;
            capped_days += 1;
        }
        c_rec[n] = c;
        let mut times: Vec<f64> = (0..c)
            .map(|_| n as f64 - rng.random::<f64>())
            .collect();
        times.sort_by(|s, t| t.total_cmp(s));
        for t in times {
            // Keep the event strictly inside the day.
            let t = t.min(n as f64 - 1e-9).max(n as f64 - 1.0 + 1e-9);
            merge(&mut nodes, &mut lineages, t, rng);
        }
    }

    let forced_root = lineages.len() > 1;
    if forced_root {
        a_rec[0] = lineages.len() as u64;
        c_rec[0] = a_rec[0] - 1;
        let mut times: Vec<f64> = (0..c_rec[0]).map(|_| -rng.random::<f64>()).collect();
        times.sort_by(|s, t| t.total_cmp(s));
        for t in times {
            let t = t.min(-1e-9).max(-1.0 + 1e-9);
            merge(&mut nodes, &mut lineages, t, rng);
        }
    }

    let root = lineages.first().copied();
    let tree = DatedTree::from_nodes(nodes, root)
        .map_err(|e| SimError::InvalidSpec(format!("internal tree construction failed: {e}")))?;

    // Records run from the present backwards and stop at the root's slice.
    let slices = match root {
        None => TreeSlices::default(),
        Some(r) => {
            let root_day = tree.nodes[r].time.ceil().max(0.0) as usize;
            let len = n_days - root_day + 1;
            TreeSlices {
                a: (0..len).map(|s| a_rec[n_days - s]).collect(),
                c: (0..len).map(|s| c_rec[n_days - s]).collect(),
            }
        }
    };

    Ok(SimTree {
        tree,
        slices,
        forced_root,
        capped_days,
    })
}

/// Everything produced by one scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub path: LatentPath,
    pub observed: ObservedSeries,
    pub tree: DatedTree,
    pub slices: TreeSlices,
    /// Slices mapped onto epidemic days `1..=N`.
    pub lineages: DailyLineages,
    pub extinct: bool,
    pub forced_root: bool,
    pub attempts: usize,
}

impl SimOutput {
    pub fn n_leaves(&self) -> usize {
        self.tree.n_leaves()
    }
}

/// Simulate epidemic, reports and genealogy for a scenario, redrawing the
/// epidemic when it dies out.
pub fn run_scenario<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<SimOutput, SimError> {
    spec.validate()?;
    let rates = FixedRates { gamma: spec.gamma };
    let beta = spec.beta_schedule.expand(spec.n_days);
    for attempt in 1..=spec.max_attempts {
        let (path, extinct) = simulate_epidemic(&beta, &rates, spec.x0, rng);
        if extinct {
            continue;
        }
        let observed = simulate_observations(&path, spec.rho, rng);
        let mut leaf_days = Vec::new();
        for n in 1..=spec.n_days {
            let k = sample_binomial(rng, path.x[n], spec.genetic_sampling_fraction);
            leaf_days.extend(std::iter::repeat_n(n, k as usize));
        }
        let sim_tree = simulate_tree(&path, &beta, &leaf_days, rng)?;
        let lineages = align_to_epidemic(&sim_tree.slices, spec.n_days).lineages;
        return Ok(SimOutput {
            path,
            observed,
            tree: sim_tree.tree,
            slices: sim_tree.slices,
            lineages,
            extinct: false,
            forced_root: sim_tree.forced_root,
            attempts: attempt,
        });
    }
    Err(SimError::ScenarioInfeasible {
        attempts: spec.max_attempts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phylo::discretize;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rates() -> FixedRates {
        FixedRates { gamma: 0.1 }
    }

    #[test]
    fn no_births_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (path, _) = simulate_epidemic(&[0.0; 30], &rates(), 5, &mut rng);
        assert!(path.x.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_start_is_extinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (path, extinct) = simulate_epidemic(&[0.3; 5], &rates(), 0, &mut rng);
        assert!(extinct);
        assert!(path.x.iter().all(|&x| x == 0));
    }

    #[test]
    fn extinction_is_absorbing() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let (path, extinct) = simulate_epidemic(&[0.05; 40], &rates(), 2, &mut rng);
            if let Some(first_zero) = path.x.iter().position(|&x| x == 0) {
                assert!(extinct);
                assert!(path.x[first_zero..].iter().all(|&x| x == 0));
            }
        }
    }

    #[test]
    fn reporting_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let path = LatentPath {
            beta: vec![0.2; 4],
            x: vec![3, 5, 8, 0, 13],
        };
        let all = simulate_observations(&path, 1.0, &mut rng);
        assert_eq!(all.y, vec![Some(5), Some(8), Some(0), Some(13)]);
        let none = simulate_observations(&path, 0.0, &mut rng);
        assert!(none.y.iter().all(|&y| y == Some(0)));
    }

    #[test]
    fn peaked_schedule_shape() {
        let b = BetaSchedule::Peaked { low: 0.1, high: 0.3 }.expand(40);
        assert!((b[19] - 0.3).abs() < 1e-12);
        assert!((b[39] - 0.1).abs() < 1e-12);
        assert!((b[0] - 0.11).abs() < 1e-12);
        let c = BetaSchedule::Changepoint { before: 0.2, after: 0.05, day: 3 }.expand(4);
        assert_eq!(c, vec![0.2, 0.2, 0.05, 0.05]);
    }

    #[test]
    fn single_leaf_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let path = LatentPath { beta: vec![0.2; 3], x: vec![2, 3, 4, 5] };
        let sim = simulate_tree(&path, &path.beta.clone(), &[2], &mut rng).unwrap();
        assert_eq!(sim.tree.n_leaves(), 1);
        assert_eq!(sim.tree.nodes.len(), 1);
        assert!(!sim.forced_root);
        assert_eq!(sim.slices.c.iter().sum::<u64>(), 0);
    }

    #[test]
    fn infeasible_sampling_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let path = LatentPath { beta: vec![0.2; 2], x: vec![2, 1, 4] };
        let err = simulate_tree(&path, &path.beta.clone(), &[1, 1], &mut rng).unwrap_err();
        assert!(matches!(err, SimError::InfeasibleSampling { day: 1, .. }));
    }

    #[test]
    fn huge_rate_coalesces_immediately() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let path = LatentPath { beta: vec![1e6; 3], x: vec![2, 2, 2, 2] };
        let sim = simulate_tree(&path, &path.beta.clone(), &[3, 3], &mut rng).unwrap();
        assert_eq!(sim.slices.c, vec![1]);
        assert!(!sim.forced_root);
    }

    #[test]
    fn simulated_records_match_discretisation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let out = run_scenario(&ScenarioSpec::peaked(0.05, 0.1), &mut rng).unwrap();
            let s = discretize(&out.tree, 1.0, 40.0).unwrap();
            assert_eq!(s, out.slices);
            for (y, x) in out.observed.y.iter().zip(&out.path.x[1..]) {
                assert!(y.unwrap() <= *x);
            }
        }
    }

    #[test]
    fn zero_fraction_gives_empty_tree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = run_scenario(&ScenarioSpec::peaked(0.05, 0.0), &mut rng).unwrap();
        assert!(out.tree.is_empty());
        assert!(out.lineages.a.iter().all(|&a| a == 0));
        assert!(out.lineages.c.iter().all(|&c| c == 0));
    }

    #[test]
    fn persistent_extinction_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut spec = ScenarioSpec::constant_reference();
        spec.beta_schedule = BetaSchedule::Constant { level: 0.0 };
        spec.gamma = 5.0;
        spec.max_attempts = 4;
        assert_eq!(
            run_scenario(&spec, &mut rng).unwrap_err(),
            SimError::ScenarioInfeasible { attempts: 4 }
        );
    }
}
