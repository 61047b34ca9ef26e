//! Marginal, treated-average and policy-relevant treatment effects from posterior draws.
//!
//! The MTE curve follows the plotting convention of covariates at their means
//! and random effects at zero, indexed by quantiles of the pooled imputed
//! strata. ATT and PRTE average each unit's own conditional effect, with its
//! own covariates, stratum and cluster effects.

use crate::data::{Dataset, IvRange};
use crate::error::{Error, Result};
use crate::mcmc::{Draw, PosteriorStore};
use crate::outcome::{mte_conditional, IvTerm, Profile};
use crate::stats::{mean, quantile_sorted};

/// Posterior mean with a central 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Summary {
    pub fn from_draws(draws: &[f64]) -> Result<Summary> {
        if draws.is_empty() {
            return Err(Error::EstimandUnavailable("no posterior draws to summarize".into()));
        }
        let mut sorted = draws.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Summary { mean: mean(draws), lo: quantile_sorted(&sorted, 0.025), hi: quantile_sorted(&sorted, 0.975) })
    }
}

/// Per-draw values of a scalar estimand and their summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub draws: Vec<f64>,
    pub summary: Summary,
    /// Draws for which the estimand was undefined.
    pub skipped: usize,
}

impl Estimate {
    pub fn skipped_fraction(&self) -> f64 {
        self.skipped as f64 / (self.skipped + self.draws.len()) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub quantile: f64,
    /// Stratum value at that quantile of the pooled imputed strata.
    pub stratum: f64,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimandResult {
    pub mte_curve: Vec<CurvePoint>,
    pub att: Estimate,
    pub prte: Estimate,
    /// Fraction of units whose posterior-mean stratum lies in the IV range.
    pub prte_population_share: f64,
    /// Fraction of treated units whose posterior-mean stratum lies below the IV minimum,
    /// where the effect is extrapolated by the outcome model.
    pub treated_below_min_share: f64,
}

/// Quantiles `0.01, 0.02, ..., 0.99`.
pub fn default_grid() -> Vec<f64> {
    (1..100).map(|k| k as f64 / 100.0).collect()
}

fn unit_effect(draw: &Draw, dataset: &Dataset, i: usize) -> f64 {
    let u = &dataset.units[i];
    let at = Profile { x: dataset.std_covariates(i), s: draw.strata[i], cluster: Some(u.cluster) };
    let iv = draw.extension.map(|e| e.at(u.iv));
    mte_conditional(&at, &draw.outcome, iv)
}

/// Average conditional effect over treated units for one draw.
pub fn att_draw(draw: &Draw, dataset: &Dataset) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, u) in dataset.units.iter().enumerate() {
        if u.treated {
            sum += unit_effect(draw, dataset, i);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EstimandUnavailable("no treated units".into()));
    }
    Ok(sum / count as f64)
}

/// Average conditional effect over units whose stratum lies in `iv_range`.
/// `None` when no stratum falls in the range for this draw.
pub fn prte_draw(draw: &Draw, dataset: &Dataset, iv_range: &IvRange) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..dataset.len() {
        if iv_range.contains(draw.strata[i]) {
            sum += unit_effect(draw, dataset, i);
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Pointwise posterior summaries of the MTE at stratum quantiles.
pub fn mte_curve(store: &PosteriorStore, dataset: &Dataset, grid: &[f64]) -> Result<Vec<CurvePoint>> {
    if store.is_empty() {
        return Err(Error::Empty("posterior store has no draws"));
    }
    if let Some(q) = grid.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
        return Err(Error::config(format!("grid quantile {q} outside (0, 1)")));
    }
    let mut pooled: Vec<f64> = store.draws().flat_map(|d| d.strata.iter().copied()).collect();
    pooled.sort_by(f64::total_cmp);
    let x_bar = vec![0.0; dataset.n_covariates()];
    let z_bar = dataset.units.iter().map(|u| u.iv).sum::<f64>() / dataset.len() as f64;
    grid.iter()
        .map(|&q| {
            let s = quantile_sorted(&pooled, q);
            let at = Profile { x: &x_bar, s, cluster: None };
            let values: Vec<f64> = store
                .draws()
                .map(|d| mte_conditional(&at, &d.outcome, d.extension.map(|e| IvTerm { delta: e.delta, z: z_bar })))
                .collect();
            let sm = Summary::from_draws(&values)?;
            Ok(CurvePoint { quantile: q, stratum: s, mean: sm.mean, lo: sm.lo, hi: sm.hi })
        })
        .collect()
}

/// ATT and PRTE per draw, the MTE curve, and stratum shares.
pub fn aggregate(store: &PosteriorStore, dataset: &Dataset, iv_range: &IvRange, grid: &[f64]) -> Result<EstimandResult> {
    if store.is_empty() {
        return Err(Error::Empty("posterior store has no draws"));
    }
    let att_draws = store.draws().map(|d| att_draw(d, dataset)).collect::<Result<Vec<f64>>>()?;
    let att = Estimate { summary: Summary::from_draws(&att_draws)?, draws: att_draws, skipped: 0 };

    let mut prte_draws = Vec::with_capacity(store.len());
    let mut skipped = 0;
    for d in store.draws() {
        match prte_draw(d, dataset, iv_range) {
            Some(v) => prte_draws.push(v),
            None => skipped += 1,
        }
    }
    let prte = Estimate { summary: Summary::from_draws(&prte_draws)?, draws: prte_draws, skipped };

    let n_draws = store.len() as f64;
    let mut mean_strata = vec![0.0; dataset.len()];
    for d in store.draws() {
        for (m, s) in mean_strata.iter_mut().zip(&d.strata) {
            *m += s / n_draws;
        }
    }
    let in_range = mean_strata.iter().filter(|s| iv_range.contains(**s)).count();
    let treated: Vec<f64> =
        dataset.units.iter().zip(&mean_strata).filter(|(u, _)| u.treated).map(|(_, s)| *s).collect();
    let below = treated.iter().filter(|s| **s < iv_range.min).count();

    Ok(EstimandResult {
        mte_curve: mte_curve(store, dataset, grid)?,
        att,
        prte,
        prte_population_share: in_range as f64 / dataset.len() as f64,
        treated_below_min_share: if treated.is_empty() { 0.0 } else { below as f64 / treated.len() as f64 },
    })
}
