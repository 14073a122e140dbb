use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rt_pmcmc::model::{FixedRates, LatentPath};
use rt_pmcmc::phylo::{discretize, parse_newick, to_newick};
use rt_pmcmc::simulate::{run_scenario, simulate_observations, simulate_tree, ScenarioSpec};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// Writing a simulated tree, parsing it back and discretizing gives the
    /// simulator's own lineage/coalescence records.
    #[test]
    fn newick_round_trip_reproduces_records(seed in any::<u64>(), frac in 0.02f64..0.3) {
        let spec = ScenarioSpec::peaked(0.05, frac);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sim = run_scenario(&spec, &mut rng).unwrap();
        prop_assume!(sim.n_leaves() > 0);
        let text = to_newick(&sim.tree);
        let parsed = parse_newick(&text, sim.tree.latest_time().unwrap()).unwrap();
        prop_assert_eq!(parsed.n_leaves(), sim.n_leaves());
        let slices = discretize(&parsed, 1.0, spec.n_days as f64).unwrap();
        prop_assert_eq!(&slices, &sim.slices);

        // Bookkeeping: going back one slice, lineages drop by the
        // coalescences and grow by the leaves sampled in the older slice.
        let mut leaves_per_slice = vec![0u64; slices.len()];
        for id in parsed.leaves() {
            let s = (spec.n_days as f64 - parsed.nodes[id].time).round() as usize;
            leaves_per_slice[s] += 1;
        }
        for n in 0..slices.len() - 1 {
            prop_assert_eq!(slices.a[n + 1], slices.a[n] - slices.c[n] + leaves_per_slice[n + 1]);
        }
        prop_assert_eq!(slices.c.iter().sum::<u64>(), sim.n_leaves() as u64 - 1);
    }
}

#[test]
fn reporting_fraction_matches_rho() {
    let rho = 0.3;
    let path = LatentPath { beta: vec![0.2; 4], x: vec![5, 12, 40, 7, 25] };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let reps = 10_000;
    let mut ratio_sum = 0.0;
    let mut count = 0.0;
    for _ in 0..reps {
        let obs = simulate_observations(&path, rho, &mut rng);
        for n in 1..=4 {
            ratio_sum += obs.y[n - 1].unwrap() as f64 / path.x[n] as f64;
            count += 1.0;
        }
    }
    let mean = ratio_sum / count;
    // Var(y/x) = ρ(1-ρ)/x; average over the four days.
    let var: f64 = [12.0, 40.0, 7.0, 25.0].iter().map(|x| rho * (1.0 - rho) / x).sum::<f64>() / 16.0;
    let se = (var / reps as f64).sqrt();
    assert!((mean - rho).abs() < 3.0 * se, "{mean} vs {rho} (se {se})");
}

#[test]
fn single_day_coalescences_match_binomial_mean() {
    let path = LatentPath { beta: vec![0.3], x: vec![10, 10] };
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let reps = 10_000;
    let p = 1.0 - (-0.06f64).exp();
    let mut total = 0.0;
    for _ in 0..reps {
        let t = simulate_tree(&path, &[0.3], &[1, 1, 1, 1], &mut rng).unwrap();
        // Slice 0 is day 1; slice 1 (if any) holds the forced root.
        total += t.slices.c[0] as f64;
    }
    let mean = total / reps as f64;
    let expected = 6.0 * p;
    let se = (6.0 * p * (1.0 - p) / reps as f64).sqrt();
    assert!((mean - expected).abs() < 3.0 * se, "{mean} vs {expected}");
}

#[test]
fn peaked_scenario_shape() {
    let spec = ScenarioSpec::peaked(0.05, 0.03);
    let beta = spec.beta_schedule.expand(40);
    assert!((beta[0] - 0.11).abs() < 0.02 && (beta.iter().cloned().fold(0.0, f64::max) - 0.3).abs() < 1e-12);
    let gamma = FixedRates { gamma: spec.gamma }.gamma;
    assert!((beta[19] / gamma - 3.0).abs() < 0.11);

    // Leaves at 3% genetic sampling are of the order of ten.
    let mut total = 0usize;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        total += run_scenario(&spec, &mut rng).unwrap().n_leaves();
    }
    let mean = total as f64 / 20.0;
    assert!((3.0..60.0).contains(&mean), "mean leaves {mean}");
}

#[test]
fn same_seed_same_output() {
    let spec = ScenarioSpec::peaked(0.05, 0.05);
    let a = run_scenario(&spec, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let b = run_scenario(&spec, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert_eq!(a, b);
    assert!(a.observed.y.iter().zip(&a.path.x[1..]).all(|(y, &x)| y.unwrap() <= x));
}
