use std::path::PathBuf;

use anyhow::{bail, Result};

use localiv::baselines::{ols_att, tsls_att, RegressionFit};
use localiv::estimands::aggregate;
use localiv::mcmc::{run, PosteriorStore};
use localiv::sensitivity::{sensitivity_sweep, SweepOptions};
use localiv::simulation::run_study;
use localiv::stats::{mean, quantile_sorted, sample_variance};

use crate::config::RunConfig;
use crate::input::{load, Loaded};
use crate::output::{num, opt, sha256_hex, ManifestInfo, Outputs, Table};

fn input_hash(cfg: &RunConfig) -> Option<String> {
    let path = cfg.data.input.as_ref()?;
    std::fs::read(path).ok().map(|b| sha256_hex(&b))
}

fn finish(outputs: Outputs, cfg: &RunConfig, dir: &PathBuf, seed: u64, with_input: bool) -> Result<()> {
    // the output location does not enter the configuration hash
    let mut hashed = cfg.clone();
    hashed.output.dir = PathBuf::new();
    let canonical = hashed.canonical()?;
    let info = ManifestInfo { config_canonical: &canonical, seed, input_sha256: if with_input { input_hash(cfg) } else { None } };
    for path in outputs.write(dir, &info)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn posterior_table(store: &PosteriorStore, rhat: &[(String, f64)]) -> Table {
    let mut t = Table::new("posterior", &["parameter", "mean", "sd", "q2.5", "q50", "q97.5", "rhat"]);
    let names = store.scalar_names();
    for (j, name) in names.iter().enumerate() {
        let mut v: Vec<f64> = store.scalar_chains(j).into_iter().flatten().collect();
        let m = mean(&v);
        let sd = if v.len() > 1 { sample_variance(&v).sqrt() } else { f64::NAN };
        v.sort_by(f64::total_cmp);
        let r = rhat.iter().find(|(n, _)| n == name).map(|(_, r)| *r);
        t.row([
            name.clone(),
            num(m),
            num(sd),
            num(quantile_sorted(&v, 0.025)),
            num(quantile_sorted(&v, 0.5)),
            num(quantile_sorted(&v, 0.975)),
            opt(r),
        ]);
    }
    t
}

pub fn fit(cfg: &RunConfig, dir: &PathBuf) -> Result<()> {
    let Loaded { dataset, cluster_labels, rows_read } = load(cfg)?;
    let chains = cfg.chains.to_chain_config();
    let fit = run(&dataset, &cfg.priors.to_prior_config(), &chains, None)?;
    let est = aggregate(&fit.store, &dataset, &dataset.iv_range, &cfg.estimands.grid)?;
    let mut out = Outputs::new("fit");
    for w in &fit.diagnostics.warnings {
        out.warn(w.clone());
    }

    out.add(posterior_table(&fit.store, &fit.diagnostics.rhat));

    let mut rhat = Table::new("rhat", &["parameter", "rhat"]);
    for (name, r) in &fit.diagnostics.rhat {
        rhat.row([name.clone(), num(*r)]);
    }
    out.add(rhat);

    let mut acc = Table::new("acceptance", &["chain", "block", "rate"]);
    for a in &fit.diagnostics.acceptance {
        acc.row([a.chain.to_string(), a.block.clone(), num(a.rate)]);
    }
    out.add(acc);

    let mut curve = Table::new("mte_curve", &["quantile", "stratum", "mean", "lo", "hi"]);
    for p in &est.mte_curve {
        curve.row([num(p.quantile), num(p.stratum), num(p.mean), num(p.lo), num(p.hi)]);
    }
    out.add(curve);

    let mut e = Table::new("estimands", &["estimand", "mean", "lo", "hi", "draws", "skipped_draws"]);
    for (name, x) in [("att", &est.att), ("prte", &est.prte)] {
        e.row([
            name.to_string(),
            num(x.summary.mean),
            num(x.summary.lo),
            num(x.summary.hi),
            x.draws.len().to_string(),
            x.skipped.to_string(),
        ]);
    }
    out.add(e);
    if est.prte.skipped > 0 {
        out.warn(format!("PRTE undefined in {} draws (no stratum inside the IV range)", est.prte.skipped));
    }

    let mut support = Table::new("support", &["quantity", "value"]);
    support.row(["rows_read".to_string(), rows_read.to_string()]);
    support.row(["rows_used".to_string(), dataset.len().to_string()]);
    support.row(["iv_min".to_string(), num(dataset.iv_range.min)]);
    support.row(["iv_max".to_string(), num(dataset.iv_range.max)]);
    support.row(["prte_population_share".to_string(), num(est.prte_population_share)]);
    support.row(["treated_below_min_share".to_string(), num(est.treated_below_min_share)]);
    out.add(support);

    let mut clusters = Table::new("clusters", &["cluster", "label", "units"]);
    for (g, label) in cluster_labels.iter().enumerate() {
        let n = dataset.units.iter().filter(|u| u.cluster == g).count();
        clusters.row([(g + 1).to_string(), label.clone(), n.to_string()]);
    }
    out.add(clusters);

    if cfg.output.draws {
        let mut bytes = Vec::new();
        fit.store.write_draws_csv(&mut bytes, num)?;
        out.add_raw("draws", bytes);
    }
    finish(out, cfg, dir, chains.seed, true)
}

pub fn sensitivity(cfg: &RunConfig, dir: &PathBuf) -> Result<()> {
    let s = &cfg.sensitivity;
    if s.delta_grid.is_empty() {
        bail!("sensitivity.delta_grid is empty");
    }
    let Loaded { dataset, .. } = load(cfg)?;
    let chains = cfg.chains.to_chain_config();
    let options = SweepOptions {
        target_r: s.widen.then_some((s.target_r[0], s.target_r[1])),
        iv_range: None,
        grid: cfg.estimands.grid.clone(),
    };
    let res = sensitivity_sweep(&dataset, &cfg.priors.to_prior_config(), &chains, &s.delta_grid, &options)?;
    if res.points.is_empty() {
        let (d, e) = &res.failures[0];
        bail!("every grid point failed; delta = {d}: {e}");
    }
    let mut out = Outputs::new("sensitivity");
    for w in &res.warnings {
        out.warn(w.clone());
    }
    let mut sweep = Table::new(
        "sweep",
        &["delta", "r_mean", "att_mean", "att_lo", "att_hi", "prte_mean", "prte_lo", "prte_hi"],
    );
    let mut draws = Table::new("r_draws", &["delta", "draw", "r"]);
    for p in &res.points {
        sweep.row([
            num(p.delta),
            num(p.r_mean),
            num(p.att.mean),
            num(p.att.lo),
            num(p.att.hi),
            num(p.prte.mean),
            num(p.prte.lo),
            num(p.prte.hi),
        ]);
        for (k, r) in p.r_draws.iter().enumerate() {
            draws.row([num(p.delta), (k + 1).to_string(), num(*r)]);
        }
        if p.undefined_r > 0 {
            out.warn(format!("delta = {}: r undefined in {} draws", p.delta, p.undefined_r));
        }
        if let Some(r) = p.max_rhat.filter(|r| *r > localiv::mcmc::RHAT_THRESHOLD) {
            out.warn(format!("delta = {}: maximum R-hat {r:.3}", p.delta));
        }
    }
    out.add(sweep);
    out.add(draws);
    let mut failures = Table::new("failures", &["delta", "error"]);
    for (d, e) in &res.failures {
        out.warn(format!("delta = {d} failed: {e}"));
        failures.row([num(*d), e.to_string()]);
    }
    out.add(failures);
    finish(out, cfg, dir, chains.seed, true)
}

pub fn simulate(cfg: &RunConfig, dir: &PathBuf) -> Result<()> {
    let sim = &cfg.simulation;
    if sim.h.is_empty() {
        bail!("simulation.h is empty");
    }
    let methods = sim.methods()?;
    let chains = sim.chains.to_chain_config();
    let priors = cfg.priors.to_prior_config();
    let mut out = Outputs::new("simulate");
    let mut results = Table::new("results", &["method", "estimand", "h", "p", "N", "replicates", "abs_bias", "rmse", "failures"]);
    let mut log = Table::new(
        "replicates",
        &["h", "replicate", "method", "att_oracle", "prte_oracle", "att_estimate", "prte_estimate", "error"],
    );
    for &h in &sim.h {
        let study_cfg = sim.study_config(h);
        let study = run_study(&study_cfg, &methods, &chains, &priors)?;
        for r in &study.rows {
            results.row([
                r.method.name().to_string(),
                r.estimand.name().to_string(),
                num(h),
                num(study_cfg.p),
                study_cfg.n.to_string(),
                study_cfg.replicates.to_string(),
                num(r.abs_bias),
                num(r.rmse),
                r.failures.to_string(),
            ]);
        }
        for rec in &study.records {
            let (att, prte, err) = match &rec.estimate {
                Ok((a, p)) => (num(*a), num(*p), String::new()),
                Err(e) => (String::new(), String::new(), e.clone()),
            };
            log.row([
                num(h),
                (rec.replicate + 1).to_string(),
                rec.method.name().to_string(),
                num(rec.att_oracle),
                num(rec.prte_oracle),
                att,
                prte,
                err,
            ]);
        }
        let failed = study.rows.iter().map(|r| r.failures).max().unwrap_or(0);
        if failed > 0 {
            out.warn(format!("h = {h}: up to {failed} failed replicates per method were excluded"));
        }
    }
    out.add(results);
    out.add(log);
    finish(out, cfg, dir, sim.seed, false)
}

fn fit_rows(method: &str, fit: &RegressionFit, summary: &mut Table, coefs: &mut Table) {
    let (lo, hi) = fit.ci95();
    summary.row([
        method.to_string(),
        num(fit.estimate()),
        num(fit.std_error()),
        num(lo),
        num(hi),
        opt(fit.first_stage_f),
        fit.n.to_string(),
        fit.n_clusters.to_string(),
    ]);
    for (j, name) in fit.names.iter().enumerate() {
        coefs.row([method.to_string(), name.clone(), num(fit.coefficients[j]), num(fit.vcov[(j, j)].max(0.0).sqrt())]);
    }
}

pub fn baselines(cfg: &RunConfig, dir: &PathBuf) -> Result<()> {
    if !cfg.baselines.ols && !cfg.baselines.tsls {
        bail!("both baselines are disabled");
    }
    let Loaded { dataset, .. } = load(cfg)?;
    let mut out = Outputs::new("baselines");
    let mut summary = Table::new(
        "summary",
        &["method", "estimate", "std_error", "ci_lo", "ci_hi", "first_stage_f", "n", "clusters"],
    );
    let mut coefs = Table::new("coefficients", &["method", "term", "estimate", "std_error"]);
    if cfg.baselines.ols {
        fit_rows("ols", &ols_att(&dataset)?, &mut summary, &mut coefs);
    }
    if cfg.baselines.tsls {
        fit_rows("tsls", &tsls_att(&dataset)?, &mut summary, &mut coefs);
    }
    out.add(summary);
    out.add(coefs);
    finish(out, cfg, dir, cfg.chains.seed, true)
}
