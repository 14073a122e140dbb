use std::fmt::Display;
use std::path::Path;

use clap::Args;

use rt_pmcmc::diagnostics::chain_health;
use rt_pmcmc::pmmh::{run_pmmh, ChainOutput};

use crate::config::{load_problem, Particles};
use crate::data;
use crate::error::Result;
use crate::manifest::Manifest;

use super::ProblemArgs;

#[derive(Debug, Args)]
pub struct PmmhArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Particle count, or `auto` to tune it first.
    #[arg(long, short = 'k')]
    pub particles: Option<Particles>,
    #[arg(long, short = 'n')]
    pub iterations: Option<usize>,
}

fn write_matrix<T: Display>(path: &Path, chain: &ChainOutput, row: impl Fn(usize) -> Vec<T>) -> Result<()> {
    let mut w = data::writer(path)?;
    let mut header = vec!["iter".to_string()];
    header.extend((1..=chain.n_days).map(|d| d.to_string()));
    w.write_record(&header)?;
    for i in 0..chain.len() {
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `theta_trace.csv`, `beta_trace.csv` and `x_trace.csv`.
pub fn write_traces(out: &Path, chain: &ChainOutput, manifest: &mut Manifest) -> Result<()> {
    let path = out.join("theta_trace.csv");
    let mut w = data::writer(&path)?;
    w.write_record(["iter", "sigma", "rho", "x0", "log_lik", "accepted"])?;
    for i in 0..chain.len() {
        w.write_record([
            (i + 1).to_string(),
            chain.sigma[i].to_string(),
            chain.rho[i].to_string(),
            chain.x0[i].to_string(),
            chain.log_lik[i].to_string(),
            u8::from(chain.accepted[i]).to_string(),
        ])?;
    }
    w.flush()?;
    manifest.output(&path);

    let path = out.join("beta_trace.csv");
    write_matrix(&path, chain, |i| chain.beta_row(i).to_vec())?;
    manifest.output(&path);
    let path = out.join("x_trace.csv");
    write_matrix(&path, chain, |i| chain.x_row(i).to_vec())?;
    manifest.output(&path);
    Ok(())
}

pub fn run(args: &PmmhArgs, out: &Path) -> Result<()> {
    let mut manifest = Manifest::start("pmmh");
    let mut cfg = args.problem.resolve()?;
    if let Some(k) = args.particles {
        cfg.particles = k;
    }
    if let Some(n) = args.iterations {
        cfg.iterations = n;
    }
    let seed = cfg.seed.expect("seed resolved");
    manifest.seed(seed);
    manifest.config(&cfg);

    let rates = cfg.rates()?;
    let prior = cfg.prior.resolve()?;
    let chain_cfg = cfg.chain_config(seed)?;
    let problem = load_problem(&cfg.data)?;
    if problem.dropped_slices > 0 {
        eprintln!(
            "warning: {} tree slice(s) older than day 1 dropped ({} coalescence(s))",
            problem.dropped_slices, problem.dropped_coalescences
        );
    }
    manifest.result("n_days", problem.data.n_days());
    manifest.result("dropped_slices", problem.dropped_slices);
    manifest.result("dropped_coalescences", problem.dropped_coalescences);

    let k = match cfg.particles {
        Particles::Fixed(k) => k,
        Particles::Auto => {
            // Tuning draws from its own stream so the chain seed stays meaningful.
            let report = super::tune::tune_problem(&cfg, &problem, seed.wrapping_add(1), out)?;
            manifest.output(&out.join("tune_report.json"));
            manifest.result("k_opt", report.k_opt);
            manifest.result("tune", &report);
            report.k_opt
        }
    };
    manifest.result("particles", k);

    let chain = run_pmmh(&chain_cfg, &rates, &problem.data, &cfg.smc_config(k), &prior)?;
    super::ensure_dir(out)?;
    write_traces(out, &chain, &mut manifest)?;

    manifest.result("acceptance_rate", chain.acceptance_rate());
    manifest.result("final_scale", chain.final_scale);
    manifest.result("jitter_events", chain.jitter_events);
    manifest.result("estimator_calls", chain.estimator_calls);
    if let Ok(health) = chain_health(&chain) {
        if health.stuck {
            eprintln!("warning: the chain looks stuck (longest run without a move: {})", health.longest_sticky_run);
        }
        manifest.result("health", health);
    }
    eprintln!("acceptance rate {:.3} with K = {k}", chain.acceptance_rate());
    manifest.write(out)?;
    Ok(())
}
