use std::path::{Path, PathBuf};

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rt_pmcmc::smc::{backward_simulate, run_smc};

use crate::config::{load_problem, Particles, Resampling};
use crate::data;
use crate::error::{CliError, Result};
use crate::manifest::Manifest;

use super::ProblemArgs;

#[derive(Debug, Args)]
pub struct SmcArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Number of particles K.
    #[arg(long, short = 'k')]
    pub particles: Option<usize>,
    /// Resample when ESS falls below this fraction of K.
    #[arg(long)]
    pub ess_threshold: Option<f64>,
    /// Resample multinomially instead of systematically.
    #[arg(long)]
    pub multinomial: bool,
    /// `day,beta` file: run with these birth rates instead of the random walk.
    #[arg(long)]
    pub fixed_beta: Option<PathBuf>,
    /// Truncate prevalence to 0..=X_MAX (fixed-beta mode only).
    #[arg(long, requires = "fixed_beta")]
    pub x_max: Option<u64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub x0: Option<u64>,
    /// Draw one trajectory by backward simulation and write `path.csv`.
    #[arg(long)]
    pub path: bool,
}

pub fn run(args: &SmcArgs, out: &Path) -> Result<()> {
    let mut manifest = Manifest::start("smc");
    let mut cfg = args.problem.resolve()?;
    if let Some(k) = args.particles {
        cfg.particles = Particles::Fixed(k);
    }
    if let Some(t) = args.ess_threshold {
        cfg.smc.ess_threshold = t;
    }
    if args.multinomial {
        cfg.smc.resampling = Resampling::Multinomial;
    }
    if let Some(v) = args.sigma {
        cfg.init.sigma = v;
    }
    if let Some(v) = args.rho {
        cfg.init.rho = v;
    }
    if let Some(v) = args.x0 {
        cfg.init.x0 = v;
    }
    let k = match cfg.particles {
        Particles::Fixed(k) => k,
        Particles::Auto => return Err(CliError::usage("smc needs an explicit particle count")),
    };
    let seed = cfg.seed.expect("seed resolved");
    manifest.seed(seed);
    manifest.config(&cfg);

    let rates = cfg.rates()?;
    let theta = cfg.init_theta()?;
    let problem = load_problem(&cfg.data)?;
    let mut smc = cfg.smc_config(k);
    if let Some(p) = &args.fixed_beta {
        let beta = data::read_beta_column(p)?;
        manifest.result("fixed_beta", &beta);
        smc.fixed_beta = Some(beta);
        smc.x_max = args.x_max;
    }
    let est = run_smc(&theta, &rates, &problem.data, &smc, seed)?;
    println!("{}", est.log_likelihood);

    super::ensure_dir(out)?;
    if args.path {
        if !est.log_likelihood.is_finite() {
            return Err(CliError::usage("the filter degenerated; no trajectory to sample"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ba5e);
        let latent = backward_simulate(&est.history, &theta, &rates, &mut rng)?;
        let path = out.join("path.csv");
        data::write_path(&path, &latent)?;
        manifest.output(&path);
    }
    manifest.result("log_likelihood", est.log_likelihood);
    manifest.result("degenerate", est.degenerate);
    manifest.result("resample_count", est.resample_count);
    manifest.result("particles", k);
    manifest.write(out)?;
    Ok(())
}
