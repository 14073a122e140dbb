use std::path::Path;

use clap::Args;

use rt_pmcmc::tune::{choose_particles, TuneReport};

use crate::config::{load_problem, Problem, RunConfig};
use crate::error::Result;
use crate::manifest::{write_json, Manifest};

use super::ProblemArgs;

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Pilot chain length.
    #[arg(long)]
    pub pilot_iterations: Option<usize>,
    /// Reference particle count K_s at which the variance is measured.
    #[arg(long)]
    pub k_s: Option<usize>,
    /// Independent tuning repeats.
    #[arg(long)]
    pub repeats: Option<usize>,
}

/// Tune on an already-loaded problem and write `tune_report.json`.
pub fn tune_problem(cfg: &RunConfig, problem: &Problem, seed: u64, out: &Path) -> Result<TuneReport> {
    let rates = cfg.rates()?;
    let prior = cfg.prior.resolve()?;
    let smc = cfg.smc_config(cfg.tune.k_s);
    let report = choose_particles(&cfg.tune, &rates, &problem.data, &prior, &smc, cfg.init_theta()?, seed)?;
    super::ensure_dir(out)?;
    write_json(&out.join("tune_report.json"), &report)?;
    Ok(report)
}

pub fn run(args: &TuneArgs, out: &Path) -> Result<()> {
    let mut manifest = Manifest::start("tune");
    let mut cfg = args.problem.resolve()?;
    if let Some(v) = args.pilot_iterations {
        cfg.tune.pilot_iterations = v;
    }
    if let Some(v) = args.k_s {
        cfg.tune.k_s = v;
    }
    if let Some(v) = args.repeats {
        cfg.tune.repeats = v;
    }
    let seed = cfg.seed.expect("seed resolved");
    manifest.seed(seed);
    manifest.config(&cfg);
    let problem = load_problem(&cfg.data)?;
    let report = tune_problem(&cfg, &problem, seed, out)?;
    println!("{}", report.k_opt);
    manifest.output(&out.join("tune_report.json"));
    manifest.result("k_opt", report.k_opt);
    manifest.result("k_opt_raw_max", report.k_opt_raw_max);
    manifest.write(out)?;
    Ok(())
}
