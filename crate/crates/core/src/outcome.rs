//! Per-arm outcome models given covariates and principal stratum.
//!
//! Ordinal family: `logit Pr(Y(t) <= k) = alpha_{t,k} + beta_t'x + gamma_t s + nu_{t,g}`
//! with strictly increasing cutpoints. Gaussian family:
//! `Y(t) ~ N(a_t + beta_t'x + gamma_t s + nu_{t,g}, omega_t^2)`.
//! The optional sensitivity term adds `delta * z` to both arms.

use crate::data::OutcomeSpec;
use crate::error::{Error, Result};
use crate::selection::dot;
use crate::stats::{log_sigmoid_diff, normal_log_pdf, sigmoid};

#[derive(Debug, Clone, PartialEq)]
pub struct ArmParams {
    /// Cutpoints `alpha_{t,1..K-1}` (ordinal) or a single intercept (gaussian).
    pub intercepts: Vec<f64>,
    pub beta: Vec<f64>,
    /// Slope on the principal stratum.
    pub gamma: f64,
    pub tau: f64,
    pub rand_effects: Vec<f64>,
    /// Residual standard deviation; gaussian family only.
    pub residual_sd: Option<f64>,
}

impl ArmParams {
    /// Linear predictor without the cutpoint/intercept.
    pub fn eta(&self, x: &[f64], s: f64, cluster: Option<usize>) -> f64 {
        let re = cluster.map_or(0.0, |g| self.rand_effects[g]);
        dot(&self.beta, x) + self.gamma * s + re
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeParams {
    pub family: OutcomeSpec,
    /// Indexed by treatment arm: `arms[0]` control, `arms[1]` treated.
    pub arms: [ArmParams; 2],
}

impl OutcomeParams {
    pub fn validate(&self, n_covariates: usize, n_clusters: usize) -> Result<()> {
        for (t, arm) in self.arms.iter().enumerate() {
            if arm.intercepts.len() != self.family.n_intercepts() {
                return Err(Error::params(format!(
                    "arm {t}: {} intercepts, expected {}",
                    arm.intercepts.len(),
                    self.family.n_intercepts()
                )));
            }
            if arm.intercepts.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::params(format!("arm {t}: cutpoints must be strictly increasing")));
            }
            if arm.beta.len() != n_covariates || arm.rand_effects.len() != n_clusters {
                return Err(Error::params(format!("arm {t}: coefficient or random-effect length mismatch")));
            }
            if !(arm.tau >= 0.0) {
                return Err(Error::params(format!("arm {t}: tau must be nonnegative")));
            }
            match (self.family, arm.residual_sd) {
                (OutcomeSpec::Gaussian, Some(sd)) if sd > 0.0 => {}
                (OutcomeSpec::Gaussian, _) => {
                    return Err(Error::params(format!("arm {t}: gaussian family needs residual_sd > 0")))
                }
                (OutcomeSpec::Ordinal { .. }, None) => {}
                (OutcomeSpec::Ordinal { .. }, Some(_)) => {
                    return Err(Error::params(format!("arm {t}: ordinal family has no residual_sd")))
                }
            }
        }
        Ok(())
    }
}

/// Direct effect of the IV on the outcome used in sensitivity analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityExtension {
    pub delta: f64,
}

impl SensitivityExtension {
    pub fn at(self, z: f64) -> IvTerm {
        IvTerm { delta: self.delta, z }
    }
}

/// The `delta * z` term evaluated at a specific IV value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvTerm {
    pub delta: f64,
    pub z: f64,
}

/// Covariates, stratum and cluster at which an outcome quantity is evaluated.
/// `cluster = None` sets random effects to zero.
#[derive(Debug, Clone, Copy)]
pub struct Profile<'a> {
    pub x: &'a [f64],
    pub s: f64,
    pub cluster: Option<usize>,
}

/// Full linear predictor of arm `t` excluding the cutpoint.
pub(crate) fn shifted_eta(arm: &ArmParams, at: &Profile<'_>, iv: Option<IvTerm>) -> f64 {
    let eta = arm.eta(at.x, at.s, at.cluster);
    match iv {
        // delta = 0 is skipped so the extended model reproduces the plain one bit for bit
        Some(term) if term.delta != 0.0 => eta + term.delta * term.z,
        _ => eta,
    }
}

/// `Pr(Y(t) <= k | x, s, cluster)` for ordinal outcomes, `1 <= k <= K-1`.
pub fn cumulative_prob(
    k: usize,
    arm: usize,
    at: &Profile<'_>,
    params: &OutcomeParams,
    iv: Option<IvTerm>,
) -> Result<f64> {
    let OutcomeSpec::Ordinal { levels } = params.family else {
        return Err(Error::params("cumulative_prob needs an ordinal outcome"));
    };
    if k == 0 || k >= levels {
        return Err(Error::params(format!("level {k} outside 1..={}", levels - 1)));
    }
    let a = &params.arms[arm];
    Ok(sigmoid(a.intercepts[k - 1] + shifted_eta(a, at, iv)))
}

/// Log-likelihood of observed outcome `y` under arm `t`. Zero-probability cells give `-inf`.
pub fn outcome_log_likelihood(y: f64, arm: usize, at: &Profile<'_>, params: &OutcomeParams, iv: Option<IvTerm>) -> f64 {
    let a = &params.arms[arm];
    let eta = shifted_eta(a, at, iv);
    arm_log_likelihood(params.family, a, y, eta)
}

/// Log-likelihood given a precomputed linear predictor (without cutpoints).
#[inline]
pub(crate) fn arm_log_likelihood(family: OutcomeSpec, arm: &ArmParams, y: f64, eta: f64) -> f64 {
    match family {
        OutcomeSpec::Ordinal { .. } => ordinal_log_likelihood(&arm.intercepts, y as usize, eta),
        OutcomeSpec::Gaussian => {
            normal_log_pdf(y, arm.intercepts[0] + eta, arm.residual_sd.expect("gaussian arm has residual_sd"))
        }
    }
}

/// `ln(Pr(Y <= y) - Pr(Y <= y - 1))` with `Pr(Y <= 0) = 0`, `Pr(Y <= K) = 1`.
#[inline]
pub(crate) fn ordinal_log_likelihood(cutpoints: &[f64], y: usize, eta: f64) -> f64 {
    let k = cutpoints.len() + 1;
    let upper = if y >= k { f64::INFINITY } else { cutpoints[y - 1] + eta };
    let lower = if y <= 1 { f64::NEG_INFINITY } else { cutpoints[y - 2] + eta };
    log_sigmoid_diff(upper, lower)
}

/// `E{Y(1) - Y(0) | S = s, X = x, cluster}` in outcome units.
pub fn mte_conditional(at: &Profile<'_>, params: &OutcomeParams, iv: Option<IvTerm>) -> f64 {
    let [a0, a1] = &params.arms;
    let eta0 = shifted_eta(a0, at, iv);
    let eta1 = shifted_eta(a1, at, iv);
    match params.family {
        OutcomeSpec::Ordinal { .. } => a0
            .intercepts
            .iter()
            .zip(&a1.intercepts)
            .map(|(c0, c1)| sigmoid(c0 + eta0) - sigmoid(c1 + eta1))
            .sum(),
        OutcomeSpec::Gaussian => (a1.intercepts[0] + eta1) - (a0.intercepts[0] + eta0),
    }
}
