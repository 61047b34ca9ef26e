//! Monte Carlo study of local IV against OLS and 2SLS under confounding and
//! effect heterogeneity.
//!
//! Data follow a latent threshold model: `S = 0.5 - 0.5 X + eps`,
//! `T = 1{Z >= S}`, `Y(0) = b00 + b01 X + e`, `Y(1) = b10 + b11 X + e + l`,
//! with `(e, l, eps)` standard trivariate Normal, `corr(e, eps) = p`,
//! `corr(l, eps) = h` and `corr(e, l) = 0`.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::baselines::{ols_att, tsls_att};
use crate::data::{Dataset, OutcomeSpec, PriorConfig, Unit};
use crate::error::{Error, Result};
use crate::estimands::{aggregate, default_grid};
use crate::mcmc::{run, stream_rng, ChainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub b00: f64,
    pub b01: f64,
    pub b10: f64,
    pub b11: f64,
    pub p: f64,
    pub h: f64,
    pub n: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Clusters for the local IV fit; units are assigned round-robin.
    pub n_clusters: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig { b00: 0.0, b01: 1.0, b10: 3.0, b11: 2.0, p: 0.5, h: 0.0, n: 1000, replicates: 100, seed: 0, n_clusters: 1 }
    }
}

/// Maximum share of failed replicates per method before a study aborts.
pub const MAX_FAILURE_RATE: f64 = 0.05;

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let coefs = [self.b00, self.b01, self.b10, self.b11, self.p, self.h];
        if coefs.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("simulation coefficients must be finite"));
        }
        if self.p.abs() > 1.0 || self.h.abs() > 1.0 || 1.0 - self.p * self.p - self.h * self.h < -1e-12 {
            return Err(Error::config(format!(
                "p = {} and h = {} give a correlation matrix that is not positive semidefinite (need p^2 + h^2 <= 1)",
                self.p, self.h
            )));
        }
        if self.n < 10 {
            return Err(Error::config(format!("sample size {} is below 10", self.n)));
        }
        if self.replicates == 0 {
            return Err(Error::config("replicates must be at least 1"));
        }
        if self.n_clusters == 0 || self.n_clusters > self.n {
            return Err(Error::config(format!("n_clusters {} outside 1..={}", self.n_clusters, self.n)));
        }
        Ok(())
    }
}

/// Observed data with the hidden truth of every unit.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub dataset: Dataset,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub strata: Vec<f64>,
}

impl SimulatedDataset {
    pub fn effects(&self) -> Vec<f64> {
        self.y1.iter().zip(&self.y0).map(|(a, b)| a - b).collect()
    }
}

/// Draws one dataset from the study design using `rng`.
pub fn simulate<R: Rng + ?Sized>(config: &SimulationConfig, rng: &mut R) -> Result<SimulatedDataset> {
    config.validate()?;
    let n = config.n;
    let resid_sd = (1.0 - config.p * config.p - config.h * config.h).max(0.0).sqrt();
    let mut units = Vec::with_capacity(n);
    let (mut y0, mut y1, mut strata) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let mut z = || -> f64 { StandardNormal.sample(rng) };
        let x = z();
        let iv = z();
        let (u1, u2, u3) = (z(), z(), z());
        let (e, l) = (u1, u2);
        let eps = config.p * u1 + config.h * u2 + resid_sd * u3;
        let s = 0.5 - 0.5 * x + eps;
        let treated = iv >= s;
        let a = config.b00 + config.b01 * x + e;
        let b = config.b10 + config.b11 * x + e + l;
        units.push(Unit {
            outcome: if treated { b } else { a },
            treated,
            iv,
            cluster: i % config.n_clusters,
            covariates: vec![x],
        });
        y0.push(a);
        y1.push(b);
        strata.push(s);
    }
    let dataset = Dataset::new(units, config.n_clusters, OutcomeSpec::Gaussian, None, vec!["x".into()])?;
    Ok(SimulatedDataset { dataset, y0, y1, strata })
}

/// Finite-sample ATT and PRTE of the realized units. The PRTE averages over
/// units whose threshold lies within the observed IV extremes.
pub fn finite_sample_estimands(sim: &SimulatedDataset) -> Result<(f64, f64)> {
    let range = sim.dataset.iv_range;
    let (mut att, mut n_t, mut prte, mut n_p) = (0.0, 0usize, 0.0, 0usize);
    for (i, u) in sim.dataset.units.iter().enumerate() {
        let effect = sim.y1[i] - sim.y0[i];
        if u.treated {
            att += effect;
            n_t += 1;
        }
        if range.contains(sim.strata[i]) {
            prte += effect;
            n_p += 1;
        }
    }
    if n_t == 0 {
        return Err(Error::EstimandUnavailable("no treated units".into()));
    }
    if n_p == 0 {
        return Err(Error::EstimandUnavailable("no threshold inside the IV range".into()));
    }
    Ok((att / n_t as f64, prte / n_p as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    LocalIv,
    Ols,
    Tsls,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::LocalIv, Method::Ols, Method::Tsls];

    pub fn name(self) -> &'static str {
        match self {
            Method::LocalIv => "local_iv",
            Method::Ols => "ols",
            Method::Tsls => "tsls",
        }
    }

    pub fn parse(name: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::config(format!("unknown method {name:?}; expected local_iv, ols or tsls")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimand {
    Att,
    Prte,
}

impl Estimand {
    pub fn name(self) -> &'static str {
        match self {
            Estimand::Att => "att",
            Estimand::Prte => "prte",
        }
    }
}

/// One method's outcome on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub method: Method,
    pub att_oracle: f64,
    pub prte_oracle: f64,
    /// `(att, prte)` estimates, or the failure message.
    pub estimate: std::result::Result<(f64, f64), String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub method: Method,
    pub estimand: Estimand,
    pub abs_bias: f64,
    pub rmse: f64,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub config: SimulationConfig,
    pub rows: Vec<StudyRow>,
    pub records: Vec<ReplicateRecord>,
}

impl StudyResult {
    pub fn row(&self, method: Method, estimand: Estimand) -> Option<&StudyRow> {
        self.rows.iter().find(|r| r.method == method && r.estimand == estimand)
    }
}

/// Data stream and chain seed of replicate `rep`.
fn replicate_streams(seed: u64, rep: usize) -> (rand_chacha::ChaCha8Rng, u64) {
    let data = stream_rng(seed, 2 * rep as u64);
    let chain_seed = stream_rng(seed, 2 * rep as u64 + 1).next_u64();
    (data, chain_seed)
}

/// Simulates replicate `rep` of the study, as [`run_study`] does.
pub fn simulate_replicate(config: &SimulationConfig, rep: usize) -> Result<SimulatedDataset> {
    let (mut rng, _) = replicate_streams(config.seed, rep);
    simulate(config, &mut rng)
}

fn fit_method(method: Method, sim: &SimulatedDataset, chain: &ChainConfig, priors: &PriorConfig) -> Result<(f64, f64)> {
    match method {
        Method::LocalIv => {
            let fit = run(&sim.dataset, priors, chain, None)?;
            let est = aggregate(&fit.store, &sim.dataset, &sim.dataset.iv_range, &default_grid())?;
            Ok((est.att.summary.mean, est.prte.summary.mean))
        }
        Method::Ols | Method::Tsls => {
            let data = baseline_data(&sim.dataset)?;
            let fit = if method == Method::Ols { ols_att(&data)? } else { tsls_att(&data)? };
            Ok((fit.estimate(), fit.estimate()))
        }
    }
}

/// With a single cluster the sandwich is undefined, so each unit becomes its own cluster.
fn baseline_data(dataset: &Dataset) -> Result<Dataset> {
    if dataset.n_clusters > 1 {
        return Ok(dataset.clone());
    }
    let mut units = dataset.units.clone();
    for (i, u) in units.iter_mut().enumerate() {
        u.cluster = i;
    }
    Dataset::new(units, dataset.len(), dataset.outcome_spec, Some(dataset.iv_range), dataset.covariate_names.clone())
}

fn run_replicate(
    config: &SimulationConfig,
    methods: &[Method],
    chain: &ChainConfig,
    priors: &PriorConfig,
    rep: usize,
) -> Result<Vec<ReplicateRecord>> {
    let (mut rng, chain_seed) = replicate_streams(config.seed, rep);
    let sim = simulate(config, &mut rng)?;
    let (att_oracle, prte_oracle) = finite_sample_estimands(&sim)?;
    let chain = ChainConfig { seed: chain_seed, ..chain.clone() };
    Ok(methods
        .iter()
        .map(|&method| ReplicateRecord {
            replicate: rep,
            method,
            att_oracle,
            prte_oracle,
            estimate: fit_method(method, &sim, &chain, priors).map_err(|e| e.to_string()),
        })
        .collect())
}

/// Runs every replicate, fits each method, and tabulates absolute mean error
/// and root mean squared error against the finite-sample estimands.
///
/// Replicates whose data admit no oracle count as failures of every method.
/// Aborts when more than [`MAX_FAILURE_RATE`] of the replicates fail for any method.
pub fn run_study(
    config: &SimulationConfig,
    methods: &[Method],
    chain: &ChainConfig,
    priors: &PriorConfig,
) -> Result<StudyResult> {
    config.validate()?;
    chain.validate()?;
    priors.validate()?;
    if methods.is_empty() {
        return Err(Error::config("no methods selected"));
    }
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();

    let per_rep: Vec<Vec<ReplicateRecord>> = (0..config.replicates)
        .into_par_iter()
        .map(|rep| {
            run_replicate(config, &methods, chain, priors, rep).unwrap_or_else(|e| {
                methods
                    .iter()
                    .map(|&method| ReplicateRecord {
                        replicate: rep,
                        method,
                        att_oracle: f64::NAN,
                        prte_oracle: f64::NAN,
                        estimate: Err(e.to_string()),
                    })
                    .collect()
            })
        })
        .collect();
    let records: Vec<ReplicateRecord> = per_rep.into_iter().flatten().collect();

    let mut rows = Vec::new();
    for &method in &methods {
        let mine: Vec<&ReplicateRecord> = records.iter().filter(|r| r.method == method).collect();
        let failures = mine.iter().filter(|r| r.estimate.is_err()).count();
        if failures as f64 > MAX_FAILURE_RATE * config.replicates as f64 {
            let first = mine.iter().find_map(|r| r.estimate.as_ref().err()).cloned().unwrap_or_default();
            return Err(Error::TooManyFailures {
                method: method.name().into(),
                failed: failures,
                total: config.replicates,
                first,
            });
        }
        for estimand in [Estimand::Att, Estimand::Prte] {
            let errors: Vec<f64> = mine
                .iter()
                .filter_map(|r| {
                    let (att, prte) = r.estimate.as_ref().ok()?;
                    Some(match estimand {
                        Estimand::Att => att - r.att_oracle,
                        Estimand::Prte => prte - r.prte_oracle,
                    })
                })
                .collect();
            let k = errors.len() as f64;
            let abs_bias = (errors.iter().sum::<f64>() / k).abs();
            let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / k).sqrt();
            rows.push(StudyRow { method, estimand, abs_bias, rmse, successes: errors.len(), failures });
        }
    }
    Ok(StudyResult { config: config.clone(), rows, records })
}
