//! Run configuration shared by `smc`, `tune` and `pmmh`, read from TOML or
//! JSON and overridable from the command line.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use rt_pmcmc::model::{FixedRates, ObservedSeries, PriorConfig, Theta};
use rt_pmcmc::phylo::DailyLineages;
use rt_pmcmc::pmmh::ChainConfig;
use rt_pmcmc::smc::{ResamplingScheme, SmcConfig, SmcData};
use rt_pmcmc::tune::TuneSpec;

use crate::data;
use crate::error::{CliError, Context, Kind, Result};

/// A fixed particle count or `"auto"` to run the tuning procedure first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Particles {
    Fixed(usize),
    Auto,
}

impl Default for Particles {
    fn default() -> Self {
        Particles::Fixed(1000)
    }
}

impl std::str::FromStr for Particles {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Particles::Auto);
        }
        match s.parse::<usize>() {
            Ok(k) if k > 0 => Ok(Particles::Fixed(k)),
            _ => Err(format!("expected a positive particle count or 'auto', got '{s}'")),
        }
    }
}

impl fmt::Display for Particles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Particles::Fixed(k) => write!(f, "{k}"),
            Particles::Auto => f.write_str("auto"),
        }
    }
}

impl Serialize for Particles {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Particles::Fixed(k) => s.serialize_u64(*k as u64),
            Particles::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for Particles {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            N(u64),
            S(String),
        }
        match Repr::deserialize(d)? {
            Repr::N(0) => Err(serde::de::Error::custom("particle count must be positive")),
            Repr::N(k) => Ok(Particles::Fixed(k as usize)),
            Repr::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// `day,observed` CSV.
    pub prevalence: Option<PathBuf>,
    /// Newick tree with branch lengths in time units.
    pub tree: Option<PathBuf>,
    /// Optional `label,time` table re-dating the tree's leaves.
    pub tip_dates: Option<PathBuf>,
    /// Pre-computed `day,a,c` lineage counts, as an alternative to a tree.
    pub lineages: Option<PathBuf>,
    /// Time assigned to the latest leaf when the tree is dated by branch lengths.
    pub most_recent_tip_time: Option<f64>,
    /// Tree time of the end of epidemic day N; defaults to the latest leaf.
    pub present: Option<f64>,
    pub day_length: Option<f64>,
    /// Number of epidemic days; defaults to the prevalence series length,
    /// or to the tree's slice count when there is no prevalence.
    pub n_days: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub sigma: f64,
    pub rho: f64,
    pub x0: u64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig { sigma: 0.05, rho: 0.03, x0: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub sigma_rate: f64,
    pub x0_size: f64,
    pub x0_prob: f64,
    /// If both are given, the day-0 prior is matched to these moments instead.
    pub x0_mean: Option<f64>,
    pub x0_variance: Option<f64>,
}

impl Default for PriorSection {
    fn default() -> Self {
        let p = PriorConfig::default();
        PriorSection {
            sigma_rate: p.sigma_rate,
            x0_size: p.x0_size,
            x0_prob: p.x0_prob,
            x0_mean: None,
            x0_variance: None,
        }
    }
}

impl PriorSection {
    pub fn resolve(&self) -> Result<PriorConfig> {
        let base = PriorConfig {
            sigma_rate: self.sigma_rate,
            x0_size: self.x0_size,
            x0_prob: self.x0_prob,
        };
        let prior = match (self.x0_mean, self.x0_variance) {
            (Some(m), Some(v)) => {
                if !(m > 0.0 && v > m) {
                    return Err(CliError::usage(format!(
                        "x0 prior needs 0 < mean < variance, got mean {m}, variance {v}"
                    )));
                }
                base.with_x0_moments(m, v)
            }
            (None, None) => base,
            _ => return Err(CliError::usage("x0_mean and x0_variance must be given together")),
        };
        prior.validate().map_err(|e| CliError::usage(e))?;
        Ok(prior)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    #[default]
    Systematic,
    Multinomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmcSection {
    pub ess_threshold: f64,
    pub resampling: Resampling,
}

impl Default for SmcSection {
    fn default() -> Self {
        SmcSection { ess_threshold: 0.5, resampling: Resampling::Systematic }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    pub target_acceptance: f64,
    pub adaptation_decay: f64,
    pub initial_sd: [f64; 3],
    pub adapt: bool,
}

impl Default for ChainSection {
    fn default() -> Self {
        let c = ChainConfig::new(1, Theta { sigma: 1.0, rho: 0.5, x0: 1 }, 0);
        ChainSection {
            target_acceptance: c.target_acceptance,
            adaptation_decay: c.adaptation_decay,
            initial_sd: c.initial_sd,
            adapt: c.adapt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub gamma: Option<f64>,
    /// Label for the time unit (day, week, year); used only for display.
    pub time_unit: String,
    pub seed: Option<u64>,
    pub iterations: usize,
    pub particles: Particles,
    /// Fraction of iterations discarded when summarizing.
    pub burn_in: f64,
    pub data: DataConfig,
    pub init: InitConfig,
    pub prior: PriorSection,
    pub smc: SmcSection,
    pub chain: ChainSection,
    pub tune: TuneSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gamma: None,
            time_unit: "day".into(),
            seed: None,
            iterations: 20_000,
            particles: Particles::default(),
            burn_in: 0.1,
            data: DataConfig::default(),
            init: InitConfig::default(),
            prior: PriorSection::default(),
            smc: SmcSection::default(),
            chain: ChainSection::default(),
            tune: TuneSpec::default(),
        }
    }
}

impl RunConfig {
    /// Read a TOML (or, by extension, JSON) configuration. Relative data
    /// paths are taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).context_kind(Kind::Io, format!("cannot read {}", path.display()))?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).context_kind(Kind::Parse, format!("invalid JSON in {}", path.display()))?
        } else {
            toml::from_str(&text).context_kind(Kind::Parse, format!("invalid TOML in {}", path.display()))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.data.prevalence,
            &mut cfg.data.tree,
            &mut cfg.data.tip_dates,
            &mut cfg.data.lineages,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn rates(&self) -> Result<FixedRates> {
        let gamma = self.gamma.ok_or_else(|| CliError::usage("the recovery rate gamma is required"))?;
        FixedRates::new(gamma).map_err(CliError::usage)
    }

    pub fn init_theta(&self) -> Result<Theta> {
        Theta::new(self.init.sigma, self.init.rho, self.init.x0).map_err(CliError::usage)
    }

    pub fn smc_config(&self, particles: usize) -> SmcConfig {
        SmcConfig {
            ess_threshold: self.smc.ess_threshold,
            resampling: match self.smc.resampling {
                Resampling::Systematic => ResamplingScheme::Systematic,
                Resampling::Multinomial => ResamplingScheme::Multinomial,
            },
            ..SmcConfig::new(particles)
        }
    }

    pub fn chain_config(&self, seed: u64) -> Result<ChainConfig> {
        Ok(ChainConfig {
            target_acceptance: self.chain.target_acceptance,
            adaptation_decay: self.chain.adaptation_decay,
            initial_sd: self.chain.initial_sd,
            adapt: self.chain.adapt,
            ..ChainConfig::new(self.iterations, self.init_theta()?, seed)
        })
    }
}

/// The assembled inference inputs plus what was lost aligning the tree.
#[derive(Debug, Clone)]
pub struct Problem {
    pub data: SmcData,
    pub dropped_slices: usize,
    pub dropped_coalescences: u64,
}

fn pad_observed(obs: ObservedSeries, n: usize) -> Result<ObservedSeries> {
    if obs.len() > n {
        return Err(CliError::usage(format!(
            "prevalence covers {} days but n_days is {n}",
            obs.len()
        )));
    }
    let mut y = obs.y;
    y.resize(n, None);
    Ok(ObservedSeries::new(y))
}

/// Load and align the prevalence series and genetic data. At least one
/// source must be present.
pub fn load_problem(cfg: &DataConfig) -> Result<Problem> {
    if cfg.tree.is_some() && cfg.lineages.is_some() {
        return Err(CliError::usage("give either a tree or a lineage table, not both"));
    }
    if cfg.tip_dates.is_some() && cfg.tree.is_none() {
        return Err(CliError::usage("tip dates need a tree"));
    }
    let observed = cfg.prevalence.as_deref().map(data::ingest_prevalence).transpose()?;
    let tree = match &cfg.tree {
        Some(t) => Some(data::load_tree(t, cfg.tip_dates.as_deref(), cfg.most_recent_tip_time.unwrap_or(0.0))?),
        None => None,
    };
    let table = cfg.lineages.as_deref().map(data::read_lineages).transpose()?;

    let observed_days = observed.as_ref().map_or(0, |o| o.len());
    let has_observations = observed.as_ref().is_some_and(|o| o.n_observed() > 0);
    let has_genetic = tree.as_ref().is_some_and(|t| t.n_leaves() > 1) || table.as_ref().is_some_and(|t| t.has_data());
    if !has_observations && !has_genetic {
        return Err(CliError::usage(
            "no data: give a prevalence series with at least one observation and/or a tree with two or more leaves",
        ));
    }

    let day_length = cfg.day_length.unwrap_or(1.0);
    let (mut dropped_slices, mut dropped_coalescences) = (0, 0);
    let slices = match &tree {
        Some(t) => Some(data::tree_lineages(t, day_length, cfg.present, None)?.0),
        None => None,
    };
    let n = cfg
        .n_days
        .or((observed_days > 0).then_some(observed_days))
        .or(slices.as_ref().map(|s| s.len()))
        .or(table.as_ref().map(|t| t.len()))
        .unwrap_or(0);
    if n == 0 {
        return Err(CliError::usage("cannot determine the number of days; set data.n_days"));
    }
    let lineages = match (slices, table) {
        (Some(s), _) => {
            let aligned = rt_pmcmc::phylo::align_to_epidemic(&s, n);
            dropped_slices = aligned.dropped_slices;
            dropped_coalescences = aligned.dropped_coalescences;
            aligned.lineages
        }
        (None, Some(mut t)) => {
            if t.len() > n {
                return Err(CliError::usage(format!("lineage table covers {} days but n_days is {n}", t.len())));
            }
            t.a.resize(n, 0);
            t.c.resize(n, 0);
            t
        }
        (None, None) => DailyLineages::empty(n),
    };
    let observed = pad_observed(observed.unwrap_or_default(), n)?;
    let data = SmcData::new(observed, lineages)?;
    Ok(Problem { data, dropped_slices, dropped_coalescences })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn particles_accept_count_or_auto() {
        #[derive(Deserialize)]
        struct W {
            particles: Particles,
        }
        let w: W = toml::from_str("particles = 1500").unwrap();
        assert_eq!(w.particles, Particles::Fixed(1500));
        let w: W = toml::from_str("particles = \"auto\"").unwrap();
        assert_eq!(w.particles, Particles::Auto);
        assert!(toml::from_str::<W>("particles = 0").is_err());
        assert!(toml::from_str::<W>("particles = \"many\"").is_err());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg: RunConfig = toml::from_str(
            "gamma = 0.1\n[tune]\nk_s = 500\n[prior]\nx0_mean = 5.0\nx0_variance = 50.0\n",
        )
        .unwrap();
        assert_eq!(cfg.tune.k_s, 500);
        assert_eq!(cfg.tune.cap, 25_000);
        let prior = cfg.prior.resolve().unwrap();
        assert!((prior.x0_prob - 0.1).abs() < 1e-12);
        assert!((prior.x0_size - 5.0 / 9.0).abs() < 1e-12);
        assert!(toml::from_str::<RunConfig>("gama = 0.1").is_err());
    }
}
