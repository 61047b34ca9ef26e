use crate::error::{Error, Result};
use crate::outcome::OutcomeParams;
use crate::selection::SelectionParams;

/// Chain protocol: iterations, burn-in, thinning and seeding.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub n_chains: usize,
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Number of initial iterations during which proposals adapt. Capped at `burn_in`.
    pub adaptation_window: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig::new(3, 50_000, 25, 0)
    }
}

impl ChainConfig {
    /// Burn-in defaults to half the iterations, adaptation to the whole burn-in.
    pub fn new(n_chains: usize, n_iterations: usize, thin: usize, seed: u64) -> Self {
        let burn_in = n_iterations / 2;
        ChainConfig { n_chains, n_iterations, burn_in, thin, seed, adaptation_window: burn_in }
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self.adaptation_window = burn_in;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_chains == 0 {
            return Err(Error::config("n_chains must be at least 1"));
        }
        if self.burn_in >= self.n_iterations {
            return Err(Error::config(format!(
                "burn_in ({}) must be below n_iterations ({})",
                self.burn_in, self.n_iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::config("thin must be at least 1"));
        }
        if self.retained_per_chain() == 0 {
            return Err(Error::config("configuration retains no draws"));
        }
        Ok(())
    }

    pub fn retained_per_chain(&self) -> usize {
        (self.n_iterations - self.burn_in) / self.thin
    }

    pub(crate) fn adapt_until(&self) -> usize {
        self.adaptation_window.min(self.burn_in)
    }
}

/// Starting values shared by every chain, replacing the overdispersed default.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub selection: SelectionParams,
    pub outcome: OutcomeParams,
    pub strata: Vec<f64>,
}

/// Block switches for checking individual kernels against known targets.
///
/// The default enables everything and is what [`run`](super::run) uses.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerOptions {
    pub update_strata: bool,
    /// Joint block of selection intercept, coefficients and cluster effects.
    pub update_selection_coefs: bool,
    pub update_sigma: bool,
    pub update_selection_tau: bool,
    pub update_outcome: bool,
    /// When false, the strata drop out of the selection-parameter conditionals.
    pub selection_likelihood: bool,
    /// When false, outcome parameters are sampled from their priors.
    pub outcome_likelihood: bool,
    pub initial: Option<InitialState>,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions {
            update_strata: true,
            update_selection_coefs: true,
            update_sigma: true,
            update_selection_tau: true,
            update_outcome: true,
            selection_likelihood: true,
            outcome_likelihood: true,
            initial: None,
        }
    }
}
