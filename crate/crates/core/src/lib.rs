//! Bayesian local instrumental-variable analysis with a continuous instrument.
//!
//! A latent-threshold selection model links the instrument to treatment
//! uptake through a continuous principal stratum; per-arm outcome models
//! condition on that stratum. Posterior draws of both, obtained by
//! Metropolis-within-Gibbs, give marginal treatment effect curves and the
//! treated and policy-relevant averages, with OLS and 2SLS baselines,
//! exclusion-restriction sensitivity analysis and a simulation harness.

pub mod baselines;
pub mod data;
pub mod error;
pub mod estimands;
mod linalg;
pub mod mcmc;
pub mod outcome;
pub mod selection;
pub mod sensitivity;
pub mod simulation;
pub mod stats;

pub use data::{Dataset, IvRange, OutcomeSpec, PriorConfig, Unit};
pub use error::{Error, Result};

/// Version of this library.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
