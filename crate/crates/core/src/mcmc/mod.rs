//! Posterior simulation by Metropolis-within-Gibbs.
//!
//! Each sweep updates, in order: the principal strata, the selection
//! intercept/coefficients/cluster effects (one conjugate Gaussian block), the
//! latent variance (inverse gamma), the selection random-effect scale, and then
//! per arm the outcome coefficients, cluster effects and their scale.
//! Chains run in parallel on independent counter-based streams of one master
//! seed, so results do not depend on scheduling.

mod adapt;
mod config;
mod diagnostics;
mod sampler;
mod store;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{ChainConfig, InitialState, SamplerOptions};
pub use diagnostics::{gelman_rubin, BlockAcceptance, Diagnostics, RHAT_THRESHOLD};
pub use store::{Draw, PosteriorStore};

use crate::data::{Dataset, PriorConfig};
use crate::error::Result;
use crate::outcome::SensitivityExtension;
use crate::selection::strata_first_inconsistent;
use adapt::AcceptCounter;
use sampler::{Chain, Model, Proposals};

/// Output of [`run`].
#[derive(Debug, Clone)]
pub struct PosteriorFit {
    pub store: PosteriorStore,
    pub diagnostics: Diagnostics,
}

/// Random stream `stream` of the master `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Samples the joint posterior of selection parameters, outcome parameters
/// and strata. With `fixed_delta`, the outcome model carries the direct IV
/// term `delta * z` with `delta` held fixed.
pub fn run(
    dataset: &Dataset,
    priors: &PriorConfig,
    config: &ChainConfig,
    fixed_delta: Option<f64>,
) -> Result<PosteriorFit> {
    run_with_options(dataset, priors, config, fixed_delta, &SamplerOptions::default())
}

pub fn run_with_options(
    dataset: &Dataset,
    priors: &PriorConfig,
    config: &ChainConfig,
    fixed_delta: Option<f64>,
    options: &SamplerOptions,
) -> Result<PosteriorFit> {
    priors.validate()?;
    config.validate()?;
    let model = Model::new(dataset, *priors, fixed_delta, options.clone())?;

    let results: Vec<Result<(Vec<Draw>, Vec<(String, AcceptCounter)>)>> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(&model, config, c))
        .collect();
    let mut chains = Vec::with_capacity(config.n_chains);
    let mut counters = Vec::with_capacity(config.n_chains);
    for r in results {
        let (draws, count) = r?;
        chains.push(draws);
        counters.push(count);
    }
    let store = PosteriorStore { chains, fixed_delta };
    let diagnostics = diagnose(&store, &counters);
    Ok(PosteriorFit { store, diagnostics })
}

fn run_chain(
    model: &Model<'_>,
    config: &ChainConfig,
    chain_id: usize,
) -> Result<(Vec<Draw>, Vec<(String, AcceptCounter)>)> {
    let fixed_delta = model.fixed_delta;
    let rng = stream_rng(config.seed, chain_id as u64);
    let mut chain = Chain::new(model, chain_id, rng)?;
    let mut draws = Vec::with_capacity(config.retained_per_chain());
    let adapt_until = config.adapt_until();
    for it in 0..config.n_iterations {
        let post_burn = it >= config.burn_in;
        chain.sweep(it < adapt_until, post_burn)?;
        if post_burn && (it - config.burn_in + 1) % config.thin == 0 {
            debug_assert!(strata_first_inconsistent(&chain.state.strata, model.data).is_none());
            draws.push(Draw {
                chain: chain_id,
                iteration: it,
                selection: chain.state.sel.clone(),
                outcome: chain.state.out.clone(),
                strata: chain.state.strata.clone(),
                extension: fixed_delta.map(|delta| SensitivityExtension { delta }),
            });
        }
    }
    Ok((draws, chain.props.counters(model.family)))
}

fn diagnose(store: &PosteriorStore, counters: &[Vec<(String, AcceptCounter)>]) -> Diagnostics {
    let mut diag = Diagnostics::default();
    for (chain, blocks) in counters.iter().enumerate() {
        for (block, counter) in blocks {
            if counter.tried == 0 {
                continue;
            }
            let rate = counter.rate();
            if block != "strata" {
                let target = Proposals::target(block);
                if rate < 0.5 * target || rate > (1.75 * target).min(0.95) {
                    diag.warnings.push(format!(
                        "chain {}: block {block} acceptance {rate:.3} outside the band around target {target}",
                        chain + 1
                    ));
                }
            }
            diag.acceptance.push(BlockAcceptance { chain: chain + 1, block: block.clone(), rate });
        }
    }

    let names = store.scalar_names();
    let min_len = store.chains.iter().map(Vec::len).min().unwrap_or(0);
    if store.chains.len() >= 2 && min_len >= 2 {
        let table = store.scalar_table();
        for (j, name) in names.iter().enumerate() {
            let per_chain: Vec<Vec<f64>> = table.iter().map(|c| c[j].clone()).collect();
            let r = gelman_rubin(&per_chain).unwrap_or(f64::NAN);
            diag.rhat.push((name.clone(), r));
        }
        let above: Vec<&(String, f64)> = diag.rhat.iter().filter(|(_, r)| *r > RHAT_THRESHOLD).collect();
        if let Some((worst, r)) = above.iter().max_by(|a, b| a.1.total_cmp(&b.1)) {
            diag.warnings.push(format!(
                "{} parameter(s) have R-hat above {RHAT_THRESHOLD}; worst is {worst} at {r:.3}",
                above.len()
            ));
        }
    } else {
        diag.warnings.push("R-hat needs at least 2 chains with 2 retained draws each".into());
    }
    diag
}
