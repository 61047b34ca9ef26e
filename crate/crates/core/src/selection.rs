//! Latent-threshold selection model.
//!
//! Each unit has a principal stratum `S ~ N(intercept + beta'x + r_cluster, sigma^2)`
//! and takes the treatment at IV value `z` exactly when `z >= S`. The IV
//! coefficient is fixed at one, so the latent scale is the IV's own scale.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::stats::{normal_cdf, normal_log_pdf};

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionParams {
    pub intercept: f64,
    /// Coefficients on the standardized covariates.
    pub beta: Vec<f64>,
    /// Latent noise standard deviation.
    pub sigma: f64,
    /// Standard deviation of the cluster random effects.
    pub tau: f64,
    pub rand_effects: Vec<f64>,
}

impl SelectionParams {
    pub fn validate(&self, n_covariates: usize, n_clusters: usize) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::params(format!("selection sigma must be positive, got {}", self.sigma)));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::params(format!("selection tau must be nonnegative, got {}", self.tau)));
        }
        if self.beta.len() != n_covariates {
            return Err(Error::params(format!("beta_s has {} entries, expected {n_covariates}", self.beta.len())));
        }
        if self.rand_effects.len() != n_clusters {
            return Err(Error::params(format!(
                "selection random effects have {} entries, expected {n_clusters}",
                self.rand_effects.len()
            )));
        }
        Ok(())
    }

    /// Mean of the latent stratum. `cluster = None` sets the random effect to zero.
    pub fn latent_mean(&self, x: &[f64], cluster: Option<usize>) -> f64 {
        let re = cluster.map_or(0.0, |g| self.rand_effects[g]);
        self.intercept + dot(&self.beta, x) + re
    }
}

/// `Pr(T = 1 | z, x, cluster) = Phi((z - mean) / sigma)`.
pub fn selection_prob(z: f64, x: &[f64], cluster: Option<usize>, params: &SelectionParams) -> f64 {
    normal_cdf((z - params.latent_mean(x, cluster)) / params.sigma)
}

/// Log prior density of a latent stratum value.
pub fn latent_log_prior(s: f64, x: &[f64], cluster: Option<usize>, params: &SelectionParams) -> f64 {
    normal_log_pdf(s, params.latent_mean(x, cluster), params.sigma)
}

/// Half-line of strata consistent with an observed `(T, Z)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region {
    /// `(-inf, z]`: treated units.
    AtMost(f64),
    /// `(z, inf)`: untreated units.
    Above(f64),
}

impl Region {
    pub fn contains(&self, s: f64) -> bool {
        match *self {
            Region::AtMost(z) => s <= z,
            Region::Above(z) => s > z,
        }
    }
}

pub fn truncation_region(treated: bool, z: f64) -> Region {
    if treated {
        Region::AtMost(z)
    } else {
        Region::Above(z)
    }
}

/// Imputed principal strata, one per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentStrata(pub Vec<f64>);

impl LatentStrata {
    /// Index of the first unit whose stratum contradicts its observed treatment.
    pub fn first_inconsistent(&self, dataset: &Dataset) -> Option<usize> {
        strata_first_inconsistent(&self.0, dataset)
    }
}

pub(crate) fn strata_first_inconsistent(strata: &[f64], dataset: &Dataset) -> Option<usize> {
    dataset
        .units
        .iter()
        .zip(strata)
        .position(|(u, &s)| !truncation_region(u.treated, u.iv).contains(s))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
