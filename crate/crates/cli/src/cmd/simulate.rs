use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use rt_pmcmc::phylo::to_newick;
use rt_pmcmc::simulate::{run_scenario, ScenarioSpec};

use crate::config::{DataConfig, RunConfig};
use crate::data;
use crate::error::{CliError, Context, Kind, Result};
use crate::manifest::Manifest;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Scenario {
    /// R_t rising linearly from 1 to 3 at mid-epidemic and back.
    Peaked,
    /// Constant birth rate 0.3 with 5% reporting.
    Constant,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Built-in scenario to start from.
    #[arg(long, value_enum, default_value = "peaked")]
    pub scenario: Scenario,
    /// Full scenario description (TOML or JSON); replaces --scenario.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Reporting probability.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Fraction of the prevalence sampled into the tree each day.
    #[arg(long)]
    pub genetic_fraction: Option<f64>,
    #[arg(long)]
    pub n_days: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Day-0 prevalence.
    #[arg(long)]
    pub x0: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn load_spec(path: &Path) -> Result<ScenarioSpec> {
    let text = fs::read_to_string(path).context_kind(Kind::Io, format!("cannot read {}", path.display()))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(&text).context_kind(Kind::Parse, format!("invalid JSON in {}", path.display()))
    } else {
        toml::from_str(&text).context_kind(Kind::Parse, format!("invalid TOML in {}", path.display()))
    }
}

pub fn run(args: &SimulateArgs, out: &Path) -> Result<()> {
    let mut manifest = Manifest::start("simulate");
    let mut spec = match &args.spec {
        Some(p) => load_spec(p)?,
        None => match args.scenario {
            Scenario::Peaked => ScenarioSpec::peaked(0.05, 0.05),
            Scenario::Constant => ScenarioSpec::constant_reference(),
        },
    };
    if let Some(v) = args.rho {
        spec.rho = v;
    }
    if let Some(v) = args.genetic_fraction {
        spec.genetic_sampling_fraction = v;
    }
    if let Some(v) = args.n_days {
        spec.n_days = v;
    }
    if let Some(v) = args.gamma {
        spec.gamma = v;
    }
    if let Some(v) = args.x0 {
        spec.x0 = v;
    }
    spec.validate()?;
    let seed = args.seed.unwrap_or_else(rand::random);
    manifest.seed(seed);
    manifest.config(&spec);

    let sim = run_scenario(&spec, &mut ChaCha8Rng::seed_from_u64(seed))?;
    super::ensure_dir(out)?;
    let n = spec.n_days;

    let path = out.join("prevalence.csv");
    let mut w = data::writer(&path)?;
    w.write_record(["day", "true_x", "observed_y"])?;
    for d in 1..=n {
        let y = sim.observed.y[d - 1].map(|v| v.to_string()).unwrap_or_default();
        w.write_record([d.to_string(), sim.path.x[d].to_string(), y])?;
    }
    w.flush()?;
    manifest.output(&path);

    let path = out.join("observed.csv");
    data::write_observed(&path, &sim.observed)?;
    manifest.output(&path);

    let path = out.join("truth.csv");
    let mut w = data::writer(&path)?;
    w.write_record(["day", "beta", "rt", "x"])?;
    for d in 1..=n {
        let beta = sim.path.beta[d - 1];
        w.write_record([
            d.to_string(),
            beta.to_string(),
            (beta / spec.gamma).to_string(),
            sim.path.x[d].to_string(),
        ])?;
    }
    w.flush()?;
    manifest.output(&path);

    let path = out.join("tree.nwk");
    fs::write(&path, to_newick(&sim.tree) + "\n").context_kind(Kind::Io, format!("cannot write {}", path.display()))?;
    manifest.output(&path);

    // Newick keeps only relative times, so the leaf dates go alongside.
    let path = out.join("tip_dates.csv");
    let mut w = data::writer(&path)?;
    w.write_record(["label", "time"])?;
    for id in sim.tree.leaves() {
        let node = &sim.tree.nodes[id];
        let label = node.label.as_deref().ok_or_else(|| CliError::usage("simulated leaf without a label"))?;
        w.write_record([label.to_string(), node.time.to_string()])?;
    }
    w.flush()?;
    manifest.output(&path);

    let path = out.join("slices.csv");
    data::write_slices(&path, &sim.slices)?;
    manifest.output(&path);
    let path = out.join("lineages.csv");
    data::write_lineages(&path, &sim.lineages)?;
    manifest.output(&path);

    // A run configuration pointing at these files, ready for `pmmh -c`.
    let run_cfg = RunConfig {
        gamma: Some(spec.gamma),
        data: DataConfig {
            prevalence: Some("observed.csv".into()),
            tree: (sim.n_leaves() > 0).then(|| "tree.nwk".into()),
            tip_dates: (sim.n_leaves() > 0).then(|| "tip_dates.csv".into()),
            present: Some(n as f64),
            n_days: Some(n),
            ..DataConfig::default()
        },
        ..RunConfig::default()
    };
    let path = out.join("run.toml");
    let text = toml::to_string(&run_cfg).map_err(|e| CliError::new(Kind::Io, e))?;
    fs::write(&path, text).context_kind(Kind::Io, format!("cannot write {}", path.display()))?;
    manifest.output(&path);

    manifest.result("x0", sim.path.x[0]);
    manifest.result("extinct", sim.extinct);
    manifest.result("forced_root", sim.forced_root);
    manifest.result("attempts", sim.attempts);
    manifest.result("leaves", sim.n_leaves());
    manifest.result("observed_total", sim.observed.y.iter().flatten().sum::<u64>());
    manifest.result("peak_prevalence", json!(sim.path.x.iter().max()));
    manifest.write(out)?;
    Ok(())
}
