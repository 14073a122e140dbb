//! Particle MCMC inference of the time-varying reproduction number.
//!
//! The latent state is a birth-death epidemic whose birth rate follows a
//! folded-normal random walk. Partially observed prevalence and a dated
//! phylogeny (sliced into days) inform it. A particle filter estimates the
//! marginal likelihood of the scalar parameters, and particle marginal
//! Metropolis–Hastings samples them together with latent trajectories.

pub mod diagnostics;
pub mod model;
pub mod phylo;
pub mod pmmh;
pub mod simulate;
pub mod smc;
pub mod tune;
