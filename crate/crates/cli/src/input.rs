//! CSV ingestion into a validated [`Dataset`].

use std::collections::HashMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use localiv::{Dataset, IvRange, OutcomeSpec, Unit};

use crate::config::RunConfig;

/// Dataset plus the original cluster labels, indexed by cluster id.
pub struct Loaded {
    pub dataset: Dataset,
    pub cluster_labels: Vec<String>,
    pub rows_read: usize,
}

pub fn load(cfg: &RunConfig) -> Result<Loaded> {
    let path = cfg.data.input.as_deref().ok_or_else(|| anyhow!("no input file configured (data.input or --input)"))?;
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read input {}", path.display()))?;
    parse(cfg, &text, path)
}

fn parse(cfg: &RunConfig, text: &str, path: &Path) -> Result<Loaded> {
    cfg.validate_filter()?;
    let d = &cfg.data;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().with_context(|| format!("cannot read header of {}", path.display()))?.clone();
    let column = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| anyhow!("column {name:?} not found in {}", path.display()))
    };
    let y_col = column(&d.outcome)?;
    let t_col = column(&d.treatment)?;
    let z_col = column(&d.iv)?;
    let c_col = d.cluster.as_deref().map(column).transpose()?;
    let x_cols = d.covariates.iter().map(|c| column(c)).collect::<Result<Vec<_>>>()?;
    let filters = d
        .filter
        .iter()
        .map(|(name, value)| Ok((column(name)?, value)))
        .collect::<Result<Vec<_>>>()?;

    let mut labels: Vec<String> = Vec::new();
    let mut label_index: HashMap<String, usize> = HashMap::new();
    let mut units = Vec::new();
    let mut rows_read = 0;
    for (r, record) in reader.records().enumerate() {
        // row numbers as in the file, header being line 1
        let line = r + 2;
        let record = record.with_context(|| format!("malformed CSV at line {line}"))?;
        rows_read += 1;
        if !filters.iter().all(|(c, v)| record.get(*c).is_some_and(|f| v.matches(f))) {
            continue;
        }
        let field = |c: usize, name: &str| -> Result<&str> {
            match record.get(c) {
                Some("") | None => bail!("line {line}: missing value in column {name:?}"),
                Some(s) => Ok(s),
            }
        };
        let number = |c: usize, name: &str| -> Result<f64> {
            let s = field(c, name)?;
            s.parse::<f64>().map_err(|_| anyhow!("line {line}: column {name:?} value {s:?} is not a number"))
        };
        let treated = match field(t_col, &d.treatment)? {
            "1" | "1.0" | "true" | "TRUE" | "True" => true,
            "0" | "0.0" | "false" | "FALSE" | "False" => false,
            s => bail!("line {line}: treatment {s:?} is not 0/1"),
        };
        let cluster = match c_col {
            None => 0,
            Some(c) => {
                let label = field(c, d.cluster.as_deref().unwrap_or_default())?.to_string();
                let next = labels.len();
                *label_index.entry(label.clone()).or_insert_with(|| {
                    labels.push(label);
                    next
                })
            }
        };
        let covariates = x_cols.iter().zip(&d.covariates).map(|(&c, n)| number(c, n)).collect::<Result<Vec<_>>>()?;
        units.push(Unit { outcome: number(y_col, &d.outcome)?, treated, iv: number(z_col, &d.iv)?, cluster, covariates });
    }
    if units.is_empty() {
        if d.filter.is_empty() {
            bail!("input {} has no data rows", path.display());
        }
        bail!("subgroup filter selects 0 of {rows_read} rows");
    }
    if labels.is_empty() {
        labels.push("all".into());
    }

    let outcome_spec = match d.family.as_str() {
        "gaussian" => OutcomeSpec::Gaussian,
        "ordinal" => {
            let levels = match d.levels {
                Some(k) => k,
                None => units.iter().map(|u| u.outcome).fold(0.0, f64::max) as usize,
            };
            OutcomeSpec::ordinal(levels)?
        }
        other => bail!("unknown outcome family {other:?}; expected ordinal or gaussian"),
    };
    let iv_range = match (d.iv_min, d.iv_max) {
        (None, None) => None,
        (lo, hi) => {
            let min = units.iter().map(|u| u.iv).fold(f64::INFINITY, f64::min);
            let max = units.iter().map(|u| u.iv).fold(f64::NEG_INFINITY, f64::max);
            Some(IvRange::new(lo.unwrap_or(min), hi.unwrap_or(max))?)
        }
    };
    let n_clusters = labels.len();
    let dataset = Dataset::new(units, n_clusters, outcome_spec, iv_range, d.covariates.clone()).map_err(|e| match e {
        localiv::Error::InvalidRow { row, message } => anyhow!("data row {}: {message}", row + 1),
        e => e.into(),
    })?;
    Ok(Loaded { dataset, cluster_labels: labels, rows_read })
}
