//! Observed data, outcome family, IV bounds and prior configuration.

use crate::error::{Error, Result};

/// Family of the outcome variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeSpec {
    /// Ordered categories `1..=levels`, modeled by cumulative-logit proportional odds.
    Ordinal { levels: usize },
    /// Continuous outcome, modeled by a Gaussian linear regression.
    Gaussian,
}

impl OutcomeSpec {
    pub fn ordinal(levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(Error::config(format!("ordinal outcome needs at least 2 levels, got {levels}")));
        }
        Ok(OutcomeSpec::Ordinal { levels })
    }

    /// Number of cutpoints (ordinal) or intercepts (gaussian) per arm.
    pub fn n_intercepts(&self) -> usize {
        match *self {
            OutcomeSpec::Ordinal { levels } => levels - 1,
            OutcomeSpec::Gaussian => 1,
        }
    }
}

/// Closed interval of IV values `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvRange {
    pub min: f64,
    pub max: f64,
}

impl IvRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min < max) || !min.is_finite() || !max.is_finite() {
            return Err(Error::config(format!("IV range requires finite min < max, got [{min}, {max}]")));
        }
        Ok(IvRange { min, max })
    }

    pub fn contains(&self, v: f64) -> bool {
        self.min <= v && v <= self.max
    }
}

/// Prior hyperparameters. The latent variance always gets the flat `1/sigma^2` prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorConfig {
    /// Prior variance of every regression coefficient and cutpoint.
    pub coef_variance: f64,
    /// Scale `A` of the half-Cauchy prior on random-effect standard deviations.
    pub half_cauchy_scale: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig { coef_variance: 100.0, half_cauchy_scale: 25.0 }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.coef_variance > 0.0 && self.coef_variance.is_finite()) {
            return Err(Error::config("coef_variance must be positive"));
        }
        if !(self.half_cauchy_scale > 0.0 && self.half_cauchy_scale.is_finite()) {
            return Err(Error::config("half_cauchy_scale must be positive"));
        }
        Ok(())
    }
}

/// One observed unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    /// Ordinal level in `1..=K` (stored as a float) or a real outcome.
    pub outcome: f64,
    pub treated: bool,
    pub iv: f64,
    /// Zero-based cluster index in `0..n_clusters`.
    pub cluster: usize,
    pub covariates: Vec<f64>,
}

/// Column means and standard deviations used to standardize covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub means: Vec<f64>,
    /// Sample standard deviations; constant columns are only centered (sd stored as 1).
    pub sds: Vec<f64>,
}

/// A validated sample of units.
///
/// Models are fit on standardized covariates; [`Dataset::std_covariates`]
/// returns them, while `units` keeps the raw values for reporting and for the
/// classical baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub units: Vec<Unit>,
    pub n_clusters: usize,
    pub outcome_spec: OutcomeSpec,
    pub iv_range: IvRange,
    pub covariate_names: Vec<String>,
    scaling: Scaling,
    standardized: Vec<f64>,
}

impl Dataset {
    /// Builds and validates a dataset. `iv_range` defaults to the observed IV extremes.
    pub fn new(
        units: Vec<Unit>,
        n_clusters: usize,
        outcome_spec: OutcomeSpec,
        iv_range: Option<IvRange>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::Empty("dataset has no units"));
        }
        let iv_range = match iv_range {
            Some(r) => r,
            None => {
                let (lo, hi) = units
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), u| (lo.min(u.iv), hi.max(u.iv)));
                if lo.is_nan() || hi.is_nan() {
                    return Err(Error::InvalidDataset("IV contains NaN".into()));
                }
                IvRange::new(lo, hi).map_err(|_| Error::InvalidDataset(format!("observed IV has no spread ({lo})")))?
            }
        };
        let p = units[0].covariates.len();
        let names = if covariate_names.is_empty() { (1..=p).map(|j| format!("x{j}")).collect() } else { covariate_names };
        Dataset {
            units,
            n_clusters,
            outcome_spec,
            iv_range,
            covariate_names: names,
            scaling: Scaling { means: vec![], sds: vec![] },
            standardized: vec![],
        }
        .validate()
    }

    /// Checks every invariant and recomputes the covariate standardization.
    pub fn validate(mut self) -> Result<Self> {
        if self.units.is_empty() {
            return Err(Error::Empty("dataset has no units"));
        }
        if self.n_clusters == 0 {
            return Err(Error::InvalidDataset("number of clusters must be at least 1".into()));
        }
        if let OutcomeSpec::Ordinal { levels } = self.outcome_spec {
            if levels < 2 {
                return Err(Error::InvalidDataset(format!("ordinal outcome needs K >= 2, got {levels}")));
            }
        }
        IvRange::new(self.iv_range.min, self.iv_range.max)?;
        let p = self.units[0].covariates.len();
        if self.covariate_names.len() != p {
            return Err(Error::InvalidDataset(format!(
                "{} covariate names for {p} covariates",
                self.covariate_names.len()
            )));
        }
        for (row, u) in self.units.iter().enumerate() {
            let bad = |message: String| Error::InvalidRow { row, message };
            if u.covariates.len() != p {
                return Err(bad(format!("expected {p} covariates, found {}", u.covariates.len())));
            }
            if let Some(j) = u.covariates.iter().position(|v| !v.is_finite()) {
                return Err(bad(format!("covariate '{}' is not a finite number", self.covariate_names[j])));
            }
            if !u.outcome.is_finite() {
                return Err(bad("outcome is not a finite number".into()));
            }
            if let OutcomeSpec::Ordinal { levels } = self.outcome_spec {
                if u.outcome.fract() != 0.0 || u.outcome < 1.0 || u.outcome > levels as f64 {
                    return Err(bad(format!("outcome {} is not a level in 1..={levels}", u.outcome)));
                }
            }
            if !u.iv.is_finite() {
                return Err(bad("IV is not a finite number".into()));
            }
            if !self.iv_range.contains(u.iv) {
                return Err(bad(format!(
                    "IV {} outside declared range [{}, {}]",
                    u.iv, self.iv_range.min, self.iv_range.max
                )));
            }
            if u.cluster >= self.n_clusters {
                return Err(bad(format!("cluster index {} outside 0..{}", u.cluster, self.n_clusters)));
            }
        }

        let n = self.units.len() as f64;
        let mut means = vec![0.0; p];
        let mut sds = vec![1.0; p];
        for j in 0..p {
            let m = self.units.iter().map(|u| u.covariates[j]).sum::<f64>() / n;
            let ss = self.units.iter().map(|u| (u.covariates[j] - m).powi(2)).sum::<f64>();
            means[j] = m;
            if self.units.len() > 1 && ss > 0.0 {
                sds[j] = (ss / (n - 1.0)).sqrt();
            }
        }
        self.standardized = self
            .units
            .iter()
            .flat_map(|u| u.covariates.iter().enumerate().map(|(j, v)| (v - means[j]) / sds[j]).collect::<Vec<_>>())
            .collect();
        self.scaling = Scaling { means, sds };
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.scaling.means.len()
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    /// Standardized covariates of unit `i`.
    pub fn std_covariates(&self, i: usize) -> &[f64] {
        let p = self.n_covariates();
        &self.standardized[i * p..(i + 1) * p]
    }

    pub fn n_treated(&self) -> usize {
        self.units.iter().filter(|u| u.treated).count()
    }

    /// Subset of units selected by `keep`, revalidated. The IV range and
    /// cluster count carry over; standardization is recomputed on the subset.
    pub fn filter(&self, mut keep: impl FnMut(&Unit) -> bool) -> Result<Dataset> {
        let units: Vec<Unit> = self.units.iter().filter(|u| keep(u)).cloned().collect();
        if units.is_empty() {
            return Err(Error::Empty("filter selected no units"));
        }
        Dataset { units, ..self.clone() }.validate()
    }
}
