use std::io::{self, Write};

use crate::data::OutcomeSpec;
use crate::outcome::{OutcomeParams, SensitivityExtension};
use crate::selection::SelectionParams;

/// One retained posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub chain: usize,
    /// Zero-based iteration at which the draw was taken.
    pub iteration: usize,
    pub selection: SelectionParams,
    pub outcome: OutcomeParams,
    pub strata: Vec<f64>,
    /// Fixed direct IV effect of the extended outcome model, if used.
    pub extension: Option<SensitivityExtension>,
}

impl Draw {
    /// Scalar model parameters in the order of [`PosteriorStore::scalar_names`].
    pub fn scalars(&self) -> Vec<f64> {
        let sel = &self.selection;
        let mut out = Vec::with_capacity(8 + sel.beta.len() + sel.rand_effects.len());
        out.push(sel.intercept);
        out.extend(&sel.beta);
        out.push(sel.sigma);
        out.push(sel.tau);
        out.extend(&sel.rand_effects);
        for arm in &self.outcome.arms {
            out.extend(&arm.intercepts);
            out.extend(&arm.beta);
            out.push(arm.gamma);
            out.push(arm.tau);
            out.extend(&arm.rand_effects);
            if let Some(sd) = arm.residual_sd {
                out.push(sd);
            }
        }
        out
    }
}

/// Retained draws of every chain, in chain order.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorStore {
    pub chains: Vec<Vec<Draw>>,
    /// Direct IV effect held fixed during sampling, if any.
    pub fixed_delta: Option<f64>,
}

impl PosteriorStore {
    pub fn draws(&self) -> impl Iterator<Item = &Draw> + '_ {
        self.chains.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat parameter names with one-based indices, e.g. `beta_s[3]`, `alpha[t=1,k=2]`.
    pub fn scalar_names(&self) -> Vec<String> {
        match self.draws().next() {
            Some(d) => scalar_names(d),
            None => Vec::new(),
        }
    }

    /// Draws of a single scalar, split by chain.
    pub fn scalar_chains(&self, index: usize) -> Vec<Vec<f64>> {
        self.chains.iter().map(|c| c.iter().map(|d| d.scalars()[index]).collect()).collect()
    }

    /// All scalars by chain: `out[chain][param][draw]`.
    pub fn scalar_table(&self) -> Vec<Vec<Vec<f64>>> {
        let k = self.scalar_names().len();
        self.chains
            .iter()
            .map(|c| {
                let mut cols = vec![Vec::with_capacity(c.len()); k];
                for d in c {
                    for (j, v) in d.scalars().into_iter().enumerate() {
                        cols[j].push(v);
                    }
                }
                cols
            })
            .collect()
    }

    /// Writes one CSV row per retained draw: chain, iteration, every scalar, then `s[i]`.
    pub fn write_draws_csv<W: Write>(&self, mut out: W, fmt: impl Fn(f64) -> String) -> io::Result<()> {
        let Some(first) = self.draws().next() else {
            return Ok(());
        };
        let mut header = vec!["chain".to_string(), "iteration".to_string()];
        header.extend(scalar_names(first));
        header.extend((1..=first.strata.len()).map(|i| format!("s[{i}]")));
        writeln!(out, "{}", header.join(","))?;
        for d in self.draws() {
            let mut row = vec![(d.chain + 1).to_string(), d.iteration.to_string()];
            row.extend(d.scalars().into_iter().map(&fmt));
            row.extend(d.strata.iter().map(|&v| fmt(v)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn scalar_names(d: &Draw) -> Vec<String> {
    let sel = &d.selection;
    let mut names = vec!["intercept_s".to_string()];
    names.extend((1..=sel.beta.len()).map(|j| format!("beta_s[{j}]")));
    names.push("sigma".into());
    names.push("tau_s".into());
    names.extend((1..=sel.rand_effects.len()).map(|g| format!("r[{g}]")));
    for (t, arm) in d.outcome.arms.iter().enumerate() {
        match d.outcome.family {
            OutcomeSpec::Ordinal { .. } => {
                names.extend((1..=arm.intercepts.len()).map(|k| format!("alpha[t={t},k={k}]")))
            }
            OutcomeSpec::Gaussian => names.push(format!("intercept[t={t}]")),
        }
        names.extend((1..=arm.beta.len()).map(|j| format!("beta[t={t},j={j}]")));
        names.push(format!("gamma[t={t}]"));
        names.push(format!("tau[t={t}]"));
        names.extend((1..=arm.rand_effects.len()).map(|g| format!("nu[t={t},g={g}]")));
        if arm.residual_sd.is_some() {
            names.push(format!("residual_sd[t={t}]"));
        }
    }
    names
}
