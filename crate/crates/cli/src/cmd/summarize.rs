use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde_json::{json, Value};

use rt_pmcmc::diagnostics::{chain_ess, monte_carlo_se, score_vs_truth, summarize, Interval};
use rt_pmcmc::model::FixedRates;
use rt_pmcmc::pmmh::ChainOutput;

use crate::data;
use crate::error::{CliError, Context, Kind, Result};
use crate::manifest::{write_json, Manifest};

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Run directories written by `pmmh`; several are pooled after burn-in.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Fraction of each chain discarded as burn-in.
    #[arg(long, default_value_t = 0.1)]
    pub burn_in: f64,
    /// Recovery rate used to turn β into R_t (default: from the run manifest).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// `day,beta` truth file to score the posterior against.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

fn parse_field<T: std::str::FromStr>(field: &str, path: &Path, line: u64) -> Result<T> {
    field
        .parse()
        .map_err(|_| CliError::parse(format!("{}:{line}: cannot parse '{field}'", path.display())))
}

/// Rows of an `iter,<day columns...>` matrix.
fn read_matrix<T: std::str::FromStr>(path: &Path) -> Result<(usize, Vec<T>, usize)> {
    let mut rdr = csv::ReaderBuilder::new()
        .from_path(path)
        .context_kind(Kind::Io, format!("cannot open {}", path.display()))?;
    let width = rdr.headers()?.len();
    if width == 0 {
        return Err(CliError::parse(format!("{}: empty header", path.display())));
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        for f in record.iter().skip(1) {
            values.push(parse_field(f, path, line)?);
        }
        rows += 1;
    }
    Ok((width - 1, values, rows))
}

/// Rebuild a chain trace from a `pmmh` run directory.
pub fn read_run(dir: &Path) -> Result<ChainOutput> {
    let path = dir.join("theta_trace.csv");
    let mut rdr = csv::ReaderBuilder::new()
        .from_path(&path)
        .context_kind(Kind::Io, format!("cannot open {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::parse(format!("{}: missing column '{name}'", path.display())))
    };
    let (cs, cr, cx, cl, ca) = (col("sigma")?, col("rho")?, col("x0")?, col("log_lik")?, col("accepted")?);
    let mut chain = ChainOutput {
        n_days: 0,
        sigma: vec![],
        rho: vec![],
        x0: vec![],
        log_lik: vec![],
        accepted: vec![],
        beta: vec![],
        x: vec![],
        final_scale: f64::NAN,
        final_covariance: [[f64::NAN; 3]; 3],
        jitter_events: 0,
        estimator_calls: 0,
    };
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        chain.sigma.push(parse_field(&record[cs], &path, line)?);
        chain.rho.push(parse_field(&record[cr], &path, line)?);
        chain.x0.push(parse_field(&record[cx], &path, line)?);
        chain.log_lik.push(parse_field(&record[cl], &path, line)?);
        chain.accepted.push(match &record[ca] {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(CliError::parse(format!("{}:{line}: bad accepted flag '{other}'", path.display()))),
        });
    }
    let (nb, beta, rb) = read_matrix::<f64>(&dir.join("beta_trace.csv"))?;
    let (nx, x, rx) = read_matrix::<u64>(&dir.join("x_trace.csv"))?;
    if nb != nx || rb != chain.len() || rx != chain.len() {
        return Err(CliError::parse(format!(
            "{}: trace files disagree ({} θ rows, {rb}×{nb} β, {rx}×{nx} x)",
            dir.display(),
            chain.len()
        )));
    }
    chain.n_days = nb;
    chain.beta = beta;
    chain.x = x;
    Ok(chain)
}

fn manifest_gamma(dir: &Path) -> Option<f64> {
    let text = fs::read_to_string(dir.join("manifest.json")).ok()?;
    let v: Value = serde_json::from_str(&text).ok()?;
    v["config"]["gamma"].as_f64()
}

/// Keep everything after the burn-in of each chain and concatenate.
fn pool(chains: Vec<ChainOutput>, burn_in: f64) -> Result<ChainOutput> {
    let mut iter = chains.into_iter();
    let mut pooled = iter.next().expect("at least one run");
    let drop = |c: &mut ChainOutput| {
        let b = (c.len() as f64 * burn_in).floor() as usize;
        let b = b.min(c.len().saturating_sub(1));
        c.sigma.drain(..b);
        c.rho.drain(..b);
        c.x0.drain(..b);
        c.log_lik.drain(..b);
        c.accepted.drain(..b);
        c.beta.drain(..b * c.n_days);
        c.x.drain(..b * c.n_days);
    };
    drop(&mut pooled);
    for mut c in iter {
        if c.n_days != pooled.n_days {
            return Err(CliError::usage(format!(
                "runs cover different numbers of days ({} vs {})",
                pooled.n_days, c.n_days
            )));
        }
        drop(&mut c);
        pooled.sigma.append(&mut c.sigma);
        pooled.rho.append(&mut c.rho);
        pooled.x0.append(&mut c.x0);
        pooled.log_lik.append(&mut c.log_lik);
        pooled.accepted.append(&mut c.accepted);
        pooled.beta.append(&mut c.beta);
        pooled.x.append(&mut c.x);
    }
    Ok(pooled)
}

fn write_intervals(path: &Path, rows: impl Iterator<Item = (usize, Interval)>) -> Result<()> {
    let mut w = data::writer(path)?;
    w.write_record(["day", "mean", "lo", "hi"])?;
    for (day, iv) in rows {
        w.write_record([day.to_string(), iv.mean.to_string(), iv.lo.to_string(), iv.hi.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: &SummarizeArgs, out: &Path) -> Result<()> {
    let mut manifest = Manifest::start("summarize");
    manifest.config(&json!({
        "runs": args.runs,
        "burn_in": args.burn_in,
        "gamma": args.gamma,
        "truth": args.truth,
    }));
    if !(0.0..1.0).contains(&args.burn_in) {
        return Err(CliError::usage(format!("burn-in fraction must be in [0, 1), got {}", args.burn_in)));
    }
    let gamma = match args.gamma.or_else(|| manifest_gamma(&args.runs[0])) {
        Some(g) => g,
        None => return Err(CliError::usage("gamma not found in the run manifest; pass --gamma")),
    };
    let rates = FixedRates::new(gamma).map_err(CliError::usage)?;

    let chains = args.runs.iter().map(|d| read_run(d)).collect::<Result<Vec<_>>>()?;
    let per_chain: Vec<Value> = args
        .runs
        .iter()
        .zip(&chains)
        .map(|(dir, c)| {
            let b = (c.len() as f64 * args.burn_in).floor() as usize;
            json!({
                "run": dir,
                "iterations": c.len(),
                "acceptance_rate": c.acceptance_rate(),
                "ess_sigma": chain_ess(&c.sigma[b..]),
                "ess_rho": chain_ess(&c.rho[b..]),
            })
        })
        .collect();
    let pooled = pool(chains, args.burn_in)?;
    let summary = summarize(&pooled, &rates, 0.0)?;

    let mut doc = json!({
        "gamma": gamma,
        "burn_in_fraction": args.burn_in,
        "chains": per_chain,
        "samples": summary.samples,
        "acceptance_rate": summary.acceptance_rate,
        "sigma": summary.sigma,
        "rho": summary.rho,
        "x0": summary.x0,
        "mcse": {
            "sigma": monte_carlo_se(&pooled.sigma),
            "rho": monte_carlo_se(&pooled.rho),
            "x0": monte_carlo_se(&pooled.x0.iter().map(|&v| v as f64).collect::<Vec<_>>()),
        },
        "days": summary.days,
    });
    if let Some(t) = &args.truth {
        let truth = data::read_beta_column(t)?;
        let score = score_vs_truth(&summary, &truth)?;
        doc["score"] = serde_json::to_value(score).expect("score serializes");
    }

    crate::cmd::ensure_dir(out)?;
    let path = out.join("summary.json");
    write_json(&path, &doc)?;
    manifest.output(&path);
    let path = out.join("rt_summary.csv");
    write_intervals(&path, summary.days.iter().map(|d| (d.day, d.rt)))?;
    manifest.output(&path);
    let path = out.join("beta_summary.csv");
    write_intervals(&path, summary.days.iter().map(|d| (d.day, d.beta)))?;
    manifest.output(&path);
    let path = out.join("x_summary.csv");
    write_intervals(&path, summary.days.iter().map(|d| (d.day, d.x)))?;
    manifest.output(&path);
    manifest.write(out)?;
    Ok(())
}
