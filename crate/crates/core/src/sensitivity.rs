//! Sensitivity to violations of the exclusion restriction.
//!
//! The outcome model gains a direct IV term `delta * z`. For each fixed
//! `delta` the whole posterior is refitted, and the fit is mapped to the ratio
//! `r` of the direct effect of moving the IV from its minimum to its maximum
//! to the total effect of that move. The ratio is evaluated without cluster
//! effects.

use rayon::prelude::*;

use crate::data::{Dataset, IvRange, OutcomeSpec, PriorConfig};
use crate::error::{Error, Result};
use crate::estimands::{aggregate, default_grid, Summary};
use crate::mcmc::{run, ChainConfig, Draw};
use crate::selection::dot;
use crate::stats::{mean, sigmoid};

/// Denominators below this magnitude leave the ratio undefined.
pub const MIN_DENOMINATOR: f64 = 1e-12;
/// Widening rounds before giving up on covering the target `r` range.
pub const MAX_WIDENING: usize = 6;

/// Ratio of direct to total effect for one draw of the extended model.
///
/// Ordinal outcomes sum cumulative-probability differences over units and
/// cutpoints; Gaussian outcomes use the corresponding mean differences.
/// Returns `None` when the denominator vanishes.
pub fn r_from_draw(draw: &Draw, dataset: &Dataset, iv_range: &IvRange, delta: f64) -> Option<f64> {
    let [a0, a1] = &draw.outcome.arms;
    let (lo, hi) = (delta * iv_range.min, delta * iv_range.max);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..dataset.len() {
        let x = dataset.std_covariates(i);
        let s = draw.strata[i];
        let eta0 = dot(&a0.beta, x) + a0.gamma * s;
        let eta1 = dot(&a1.beta, x) + a1.gamma * s;
        match draw.outcome.family {
            OutcomeSpec::Ordinal { .. } => {
                for (c0, c1) in a0.intercepts.iter().zip(&a1.intercepts) {
                    let base = sigmoid(c0 + eta0 + lo);
                    num += base - sigmoid(c0 + eta0 + hi);
                    den += base - sigmoid(c1 + eta1 + hi);
                }
            }
            OutcomeSpec::Gaussian => {
                let base = a0.intercepts[0] + eta0 + lo;
                num += a0.intercepts[0] + eta0 + hi - base;
                den += a1.intercepts[0] + eta1 + hi - base;
            }
        }
    }
    (den.abs() >= MIN_DENOMINATOR).then(|| num / den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityPoint {
    pub delta: f64,
    /// Posterior mean of `r` over draws where it is defined.
    pub r_mean: f64,
    pub r_draws: Vec<f64>,
    pub undefined_r: usize,
    pub att: Summary,
    pub prte: Summary,
    pub max_rhat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityResult {
    /// Successful grid points ordered by `r_mean`.
    pub points: Vec<SensitivityPoint>,
    /// Grid points whose fit failed, with the error.
    pub failures: Vec<(f64, Error)>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    /// `(lo, hi)` range of `r` the grid is widened to cover; `None` disables widening.
    pub target_r: Option<(f64, f64)>,
    /// IV bounds for the PRTE and for `r`; defaults to the dataset's.
    pub iv_range: Option<IvRange>,
    pub grid: Vec<f64>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { target_r: Some((-0.5, 0.5)), iv_range: None, grid: default_grid() }
    }
}

/// Default `delta` values.
pub fn default_delta_grid() -> Vec<f64> {
    vec![-1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0]
}

fn fit_point(
    dataset: &Dataset,
    priors: &PriorConfig,
    config: &ChainConfig,
    iv_range: &IvRange,
    grid: &[f64],
    delta: f64,
) -> Result<SensitivityPoint> {
    let fit = run(dataset, priors, config, Some(delta))?;
    let est = aggregate(&fit.store, dataset, iv_range, grid)?;
    let mut r_draws = Vec::with_capacity(fit.store.len());
    let mut undefined_r = 0;
    for d in fit.store.draws() {
        match r_from_draw(d, dataset, iv_range, delta) {
            Some(r) => r_draws.push(r),
            None => undefined_r += 1,
        }
    }
    if r_draws.is_empty() {
        return Err(Error::EstimandUnavailable(format!("r undefined for every draw at delta = {delta}")));
    }
    Ok(SensitivityPoint {
        delta,
        r_mean: mean(&r_draws),
        r_draws,
        undefined_r,
        att: est.att.summary,
        prte: est.prte.summary,
        max_rhat: fit.diagnostics.max_rhat(),
    })
}

/// Fits the extended model at every `delta` in `delta_grid` with the same
/// seed. With a target `r` range the grid is extended by doubling its
/// extremes until the fitted `r` values cover the target.
pub fn sensitivity_sweep(
    dataset: &Dataset,
    priors: &PriorConfig,
    config: &ChainConfig,
    delta_grid: &[f64],
    options: &SweepOptions,
) -> Result<SensitivityResult> {
    if delta_grid.is_empty() {
        return Err(Error::config("delta grid is empty"));
    }
    if let Some(d) = delta_grid.iter().find(|d| !d.is_finite()) {
        return Err(Error::config(format!("delta grid value {d} is not finite")));
    }
    if !delta_grid.contains(&0.0) {
        return Err(Error::config("delta grid must include 0"));
    }
    if let Some((lo, hi)) = options.target_r {
        if !(lo.is_finite() && hi.is_finite() && lo <= 0.0 && hi >= 0.0) {
            return Err(Error::config(format!("target r range [{lo}, {hi}] must be finite and contain 0")));
        }
    }
    let iv_range = options.iv_range.unwrap_or(dataset.iv_range);
    let mut pending: Vec<f64> = delta_grid.to_vec();
    pending.sort_by(f64::total_cmp);
    pending.dedup();

    let mut result = SensitivityResult { points: Vec::new(), failures: Vec::new(), warnings: Vec::new() };
    let mut fitted: Vec<f64> = Vec::new();
    let mut round = 0;
    loop {
        let outcomes: Vec<(f64, Result<SensitivityPoint>)> = pending
            .par_iter()
            .map(|&d| (d, fit_point(dataset, priors, config, &iv_range, &options.grid, d)))
            .collect();
        for (d, r) in outcomes {
            fitted.push(d);
            match r {
                Ok(p) => result.points.push(p),
                Err(e) => result.failures.push((d, e)),
            }
        }
        let Some((lo, hi)) = options.target_r else { break };
        let r_min = result.points.iter().map(|p| p.r_mean).fold(f64::INFINITY, f64::min);
        let r_max = result.points.iter().map(|p| p.r_mean).fold(f64::NEG_INFINITY, f64::max);
        if r_min <= lo && r_max >= hi {
            break;
        }
        let d_min = fitted.iter().copied().fold(0.0, f64::min);
        let d_max = fitted.iter().copied().fold(0.0, f64::max);
        if d_min == 0.0 && d_max == 0.0 {
            break;
        }
        if round == MAX_WIDENING {
            result.warnings.push(format!(
                "r range [{r_min:.3}, {r_max:.3}] does not cover [{lo}, {hi}] after {MAX_WIDENING} widenings"
            ));
            break;
        }
        round += 1;
        pending = [2.0 * d_min, 2.0 * d_max].into_iter().filter(|d| *d != 0.0).collect();
    }
    result.points.sort_by(|a, b| a.r_mean.total_cmp(&b.r_mean).then(a.delta.total_cmp(&b.delta)));
    result.failures.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(result)
}
