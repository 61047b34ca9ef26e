//! Run configuration: TOML file, environment and command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use localiv::mcmc::ChainConfig;
use localiv::simulation::{Method, SimulationConfig};
use localiv::PriorConfig;

/// Environment variable that overrides the output directory.
pub const OUTPUT_DIR_ENV: &str = "LOCALIV_OUTPUT_DIR";

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub chains: ChainsConfig,
    pub priors: PriorsConfig,
    pub estimands: EstimandsConfig,
    pub output: OutputConfig,
    pub sensitivity: SensitivityConfig,
    pub simulation: SimulationSection,
    pub baselines: BaselinesConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub input: Option<PathBuf>,
    pub outcome: String,
    pub treatment: String,
    pub iv: String,
    /// Cluster column; without one all units share a single cluster.
    pub cluster: Option<String>,
    pub covariates: Vec<String>,
    /// `ordinal` or `gaussian`.
    pub family: String,
    /// Number of ordinal levels; defaults to the largest observed level.
    pub levels: Option<usize>,
    /// Further columns that may appear in `filter`.
    pub group_columns: Vec<String>,
    /// Keep rows whose column equals the given value.
    pub filter: BTreeMap<String, FilterValue>,
    pub iv_min: Option<f64>,
    pub iv_max: Option<f64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            input: None,
            outcome: "y".into(),
            treatment: "t".into(),
            iv: "z".into(),
            cluster: None,
            covariates: Vec::new(),
            family: "ordinal".into(),
            levels: None,
            group_columns: Vec::new(),
            filter: BTreeMap::new(),
            iv_min: None,
            iv_max: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum FilterValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl FilterValue {
    /// Numeric values compare numerically, text compares after trimming.
    pub fn matches(&self, field: &str) -> bool {
        let field = field.trim();
        match self {
            FilterValue::Int(v) => field.parse::<f64>().is_ok_and(|f| f == *v as f64),
            FilterValue::Float(v) => field.parse::<f64>().is_ok_and(|f| f == *v),
            FilterValue::Text(s) => match (s.trim().parse::<f64>(), field.parse::<f64>()) {
                (Ok(a), Ok(b)) => a == b,
                _ => s.trim() == field,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ChainsConfig {
    pub n_chains: usize,
    pub iterations: usize,
    /// Defaults to half the iterations.
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub seed: u64,
    /// Defaults to the burn-in.
    pub adaptation_window: Option<usize>,
}

impl Default for ChainsConfig {
    fn default() -> Self {
        let d = ChainConfig::default();
        ChainsConfig { n_chains: d.n_chains, iterations: d.n_iterations, burn_in: None, thin: d.thin, seed: d.seed, adaptation_window: None }
    }
}

impl ChainsConfig {
    pub fn to_chain_config(&self) -> ChainConfig {
        let mut c = ChainConfig::new(self.n_chains, self.iterations, self.thin, self.seed);
        if let Some(b) = self.burn_in {
            c = c.with_burn_in(b);
        }
        if let Some(a) = self.adaptation_window {
            c.adaptation_window = a;
        }
        c
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PriorsConfig {
    pub coef_variance: f64,
    pub half_cauchy_scale: f64,
}

impl Default for PriorsConfig {
    fn default() -> Self {
        let d = PriorConfig::default();
        PriorsConfig { coef_variance: d.coef_variance, half_cauchy_scale: d.half_cauchy_scale }
    }
}

impl PriorsConfig {
    pub fn to_prior_config(&self) -> PriorConfig {
        PriorConfig { coef_variance: self.coef_variance, half_cauchy_scale: self.half_cauchy_scale }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EstimandsConfig {
    /// Strata quantiles at which the MTE curve is reported.
    pub grid: Vec<f64>,
}

impl Default for EstimandsConfig {
    fn default() -> Self {
        EstimandsConfig { grid: localiv::estimands::default_grid() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write every retained draw.
    pub draws: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("localiv-output"), draws: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivityConfig {
    pub delta_grid: Vec<f64>,
    /// Range of `r` the grid is widened to cover.
    pub target_r: [f64; 2],
    pub widen: bool,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig { delta_grid: localiv::sensitivity::default_delta_grid(), target_r: [-0.5, 0.5], widen: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    pub b00: f64,
    pub b01: f64,
    pub b10: f64,
    pub b11: f64,
    pub p: f64,
    /// Heterogeneity values; one study is run per value.
    pub h: Vec<f64>,
    pub n: usize,
    pub replicates: usize,
    /// Use 1000 replicates regardless of `replicates`.
    pub full: bool,
    pub seed: u64,
    pub n_clusters: usize,
    pub methods: Vec<String>,
    /// Chain settings for the local IV fits.
    pub chains: ChainsConfig,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let d = SimulationConfig::default();
        SimulationSection {
            b00: d.b00,
            b01: d.b01,
            b10: d.b10,
            b11: d.b11,
            p: d.p,
            h: vec![0.0, 0.4, 0.8],
            n: d.n,
            replicates: d.replicates,
            full: false,
            seed: d.seed,
            n_clusters: d.n_clusters,
            methods: Method::ALL.iter().map(|m| m.name().to_string()).collect(),
            chains: ChainsConfig { n_chains: 3, iterations: 5000, burn_in: None, thin: 5, seed: 0, adaptation_window: None },
        }
    }
}

pub const FULL_REPLICATES: usize = 1000;

impl SimulationSection {
    pub fn study_config(&self, h: f64) -> SimulationConfig {
        SimulationConfig {
            b00: self.b00,
            b01: self.b01,
            b10: self.b10,
            b11: self.b11,
            p: self.p,
            h,
            n: self.n,
            replicates: if self.full { FULL_REPLICATES } else { self.replicates },
            seed: self.seed,
            n_clusters: self.n_clusters,
        }
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        self.methods.iter().map(|m| Method::parse(m).map_err(Into::into)).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BaselinesConfig {
    pub ols: bool,
    pub tsls: bool,
}

impl Default for BaselinesConfig {
    fn default() -> Self {
        BaselinesConfig { ols: true, tsls: true }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        // relative input paths are taken relative to the config file
        if let (Some(input), Some(dir)) = (&cfg.data.input, path.parent()) {
            if input.is_relative() {
                cfg.data.input = Some(dir.join(input));
            }
        }
        Ok(cfg)
    }

    /// Canonical TOML of the effective configuration.
    pub fn canonical(&self) -> Result<String> {
        toml::to_string(self).context("cannot serialize configuration")
    }

    pub fn declared_columns(&self) -> Vec<&str> {
        let d = &self.data;
        let mut cols = vec![d.outcome.as_str(), d.treatment.as_str(), d.iv.as_str()];
        cols.extend(d.cluster.as_deref());
        cols.extend(d.covariates.iter().map(String::as_str));
        cols.extend(d.group_columns.iter().map(String::as_str));
        cols
    }

    pub fn validate_filter(&self) -> Result<()> {
        let declared = self.declared_columns();
        for col in self.data.filter.keys() {
            if !declared.contains(&col.as_str()) {
                bail!("filter column {col:?} is not declared; add it to data.group_columns");
            }
        }
        Ok(())
    }
}
