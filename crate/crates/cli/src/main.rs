//! `localiv`: local instrumental-variable analysis from the command line.
//!
//! Every command reads a TOML configuration; command-line flags override it.
//! Outputs are CSV files named `<command>_<artifact>.csv` plus
//! `<command>_manifest.toml`.

mod commands;
mod config;
mod input;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};

use config::{FilterValue, RunConfig, OUTPUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "localiv", version, about = "Bayesian local IV estimation of treatment effects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the posterior and report MTE, ATT and PRTE
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        chains: Chains,
        /// Also write every retained draw
        #[arg(long)]
        draws: bool,
    },
    /// Refit across direct IV effects and report estimates against r
    Sensitivity {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        chains: Chains,
        /// Comma-separated delta values (must include 0)
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        delta_grid: Option<Vec<f64>>,
        /// Do not extend the grid to cover the target r range
        #[arg(long)]
        no_widen: bool,
    },
    /// Monte Carlo comparison of local IV, OLS and 2SLS
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicates: Option<usize>,
        /// Run 1000 replicates
        #[arg(long)]
        full: bool,
        /// Comma-separated heterogeneity values
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        h: Option<Vec<f64>>,
        #[arg(long, allow_hyphen_values = true)]
        p: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[command(flatten)]
        chains: Chains,
    },
    /// OLS regression adjustment and 2SLS with cluster-robust errors
    Baselines {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Overrides the configuration and the LOCALIV_OUTPUT_DIR variable
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Subgroup predicate COLUMN=VALUE; repeatable
    #[arg(long = "filter")]
    filters: Vec<String>,
    /// ordinal or gaussian
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    levels: Option<usize>,
}

#[derive(Args)]
struct Chains {
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long = "chain-seed")]
    chain_seed: Option<u64>,
}

impl Chains {
    fn apply(&self, c: &mut config::ChainsConfig) {
        if let Some(v) = self.chains {
            c.n_chains = v;
        }
        if let Some(v) = self.iterations {
            c.iterations = v;
        }
        if let Some(v) = self.burn_in {
            c.burn_in = Some(v);
        }
        if let Some(v) = self.thin {
            c.thin = v;
        }
        if let Some(v) = self.chain_seed {
            c.seed = v;
        }
    }
}

fn base_config(path: Option<&PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn output_dir(cfg: &mut RunConfig, flag: Option<PathBuf>) {
    if let Some(d) = flag {
        cfg.output.dir = d;
    } else if let Some(d) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
        cfg.output.dir = PathBuf::from(d);
    }
}

fn apply_common(common: Common) -> Result<RunConfig> {
    let mut cfg = base_config(common.config.as_ref())?;
    if let Some(i) = common.input {
        cfg.data.input = Some(i);
    }
    if let Some(f) = common.family {
        cfg.data.family = f;
    }
    if let Some(k) = common.levels {
        cfg.data.levels = Some(k);
    }
    for f in &common.filters {
        let (col, value) = f.split_once('=').ok_or_else(|| anyhow!("filter {f:?} is not COLUMN=VALUE"))?;
        cfg.data.filter.insert(col.trim().to_string(), FilterValue::Text(value.trim().to_string()));
    }
    output_dir(&mut cfg, common.output_dir);
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit { common, chains, draws } => {
            let mut cfg = apply_common(common)?;
            chains.apply(&mut cfg.chains);
            cfg.output.draws |= draws;
            let dir = cfg.output.dir.clone();
            commands::fit(&cfg, &dir)
        }
        Command::Sensitivity { common, chains, delta_grid, no_widen } => {
            let mut cfg = apply_common(common)?;
            chains.apply(&mut cfg.chains);
            if let Some(g) = delta_grid {
                cfg.sensitivity.delta_grid = g;
            }
            if no_widen {
                cfg.sensitivity.widen = false;
            }
            let dir = cfg.output.dir.clone();
            commands::sensitivity(&cfg, &dir)
        }
        Command::Simulate { config, output_dir: out, seed, replicates, full, h, p, n, chains } => {
            let mut cfg = base_config(config.as_ref())?;
            let sim = &mut cfg.simulation;
            if let Some(v) = seed {
                sim.seed = v;
            }
            if let Some(v) = replicates {
                sim.replicates = v;
            }
            sim.full |= full;
            if let Some(v) = h {
                sim.h = v;
            }
            if let Some(v) = p {
                sim.p = v;
            }
            if let Some(v) = n {
                sim.n = v;
            }
            chains.apply(&mut sim.chains);
            output_dir(&mut cfg, out);
            let dir = cfg.output.dir.clone();
            commands::simulate(&cfg, &dir)
        }
        Command::Baselines { common } => {
            let cfg = apply_common(common)?;
            let dir = cfg.output.dir.clone();
            commands::baselines(&cfg, &dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {line}");
            ExitCode::FAILURE
        }
    }
}
