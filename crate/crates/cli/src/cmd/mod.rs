pub mod discretize;
pub mod pmmh;
pub mod simulate;
pub mod smc;
pub mod summarize;
pub mod tune;

use std::path::{Path, PathBuf};

use clap::Args;

use crate::config::RunConfig;
use crate::error::{Context, Kind, Result};

/// Problem inputs shared by `smc`, `tune` and `pmmh`. Flags override the
/// configuration file.
#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// TOML or JSON run configuration.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    /// Prevalence CSV with columns `day,observed`.
    #[arg(long)]
    pub prevalence: Option<PathBuf>,
    /// Newick tree with branch lengths in time units.
    #[arg(long)]
    pub tree: Option<PathBuf>,
    /// `label,time` table dating the tree's leaves.
    #[arg(long)]
    pub tip_dates: Option<PathBuf>,
    /// Pre-computed `day,a,c` lineage table instead of a tree.
    #[arg(long, conflicts_with = "tree")]
    pub lineages: Option<PathBuf>,
    /// Number of epidemic days.
    #[arg(long)]
    pub n_days: Option<usize>,
    /// Tree time at the end of the last epidemic day (default: latest leaf).
    #[arg(long)]
    pub present: Option<f64>,
    /// Recovery rate per time unit.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Random seed; generated and recorded if neither given here nor in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ProblemArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let d = &mut cfg.data;
        if self.prevalence.is_some() {
            d.prevalence.clone_from(&self.prevalence);
        }
        if self.tree.is_some() {
            d.tree.clone_from(&self.tree);
            d.lineages = None;
        }
        if self.lineages.is_some() {
            d.lineages.clone_from(&self.lineages);
            d.tree = None;
        }
        if self.tip_dates.is_some() {
            d.tip_dates.clone_from(&self.tip_dates);
        }
        if self.present.is_some() {
            d.present = self.present;
        }
        if self.n_days.is_some() {
            d.n_days = self.n_days;
        }
        if self.gamma.is_some() {
            cfg.gamma = self.gamma;
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if cfg.seed.is_none() {
            cfg.seed = Some(rand::random());
        }
        Ok(cfg)
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).context_kind(Kind::Io, format!("cannot create {}", dir.display()))
}
