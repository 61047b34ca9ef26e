use localiv::mcmc::{run, run_with_options, ChainConfig, InitialState, SamplerOptions};
use localiv::outcome::{ArmParams, OutcomeParams};
use localiv::selection::{truncation_region, LatentStrata, Region, SelectionParams};
use localiv::simulation::{simulate, SimulationConfig};
use localiv::stats::{mean, normal_pdf};
use localiv::{Dataset, OutcomeSpec, PriorConfig, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ordinal_data(n: usize, g: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let units = (0..n)
        .map(|i| {
            let x: f64 = rng.random_range(-1.5..1.5);
            let z: f64 = rng.random_range(-2.0..2.0);
            let treated = z + 0.3 * x + rng.random_range(-1.0..1.0) > 0.0;
            let y = 1 + ((x + treated as u8 as f64 + rng.random_range(-1.0..2.0)).clamp(0.0, 2.99) as usize);
            Unit { outcome: y as f64, treated, iv: z, cluster: i % g, covariates: vec![x] }
        })
        .collect();
    Dataset::new(units, g, OutcomeSpec::Ordinal { levels: 3 }, None, vec![]).unwrap()
}

/// Batch-means Monte Carlo standard error of the mean.
fn mc_se(x: &[f64]) -> f64 {
    let b = 50;
    let size = x.len() / b;
    let means: Vec<f64> = (0..b).map(|k| mean(&x[k * size..(k + 1) * size])).collect();
    let m = mean(&means);
    (means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (b - 1) as f64 / b as f64).sqrt()
}

#[test]
fn same_seed_same_draws() {
    let ds = ordinal_data(60, 3, 1);
    let cfg = ChainConfig::new(2, 300, 2, 9);
    let a = run(&ds, &PriorConfig::default(), &cfg, None).unwrap();
    let b = run(&ds, &PriorConfig::default(), &cfg, None).unwrap();
    assert_eq!(a.store, b.store);
    let c = run(&ds, &PriorConfig::default(), &ChainConfig { seed: 10, ..cfg }, None).unwrap();
    assert_ne!(a.store, c.store);
}

#[test]
fn retained_draw_count_and_consistency() {
    let ds = ordinal_data(40, 2, 2);
    let cfg = ChainConfig::new(3, 101, 7, 0).with_burn_in(30);
    let fit = run(&ds, &PriorConfig::default(), &cfg, None).unwrap();
    assert_eq!(cfg.retained_per_chain(), (101 - 30) / 7);
    for chain in &fit.store.chains {
        assert_eq!(chain.len(), cfg.retained_per_chain());
        for d in chain {
            assert_eq!(LatentStrata(d.strata.clone()).first_inconsistent(&ds), None);
        }
    }
    let names = fit.store.scalar_names();
    assert_eq!(fit.diagnostics.rhat.len(), names.len());
    assert!(names.contains(&"alpha[t=1,k=2]".to_string()));
}

#[test]
fn zero_delta_reproduces_plain_fit() {
    let ds = ordinal_data(50, 2, 3);
    let cfg = ChainConfig::new(2, 200, 1, 4);
    let plain = run(&ds, &PriorConfig::default(), &cfg, None).unwrap();
    let zero = run(&ds, &PriorConfig::default(), &cfg, Some(0.0)).unwrap();
    for (a, b) in plain.store.draws().zip(zero.store.draws()) {
        assert_eq!(a.scalars(), b.scalars());
        assert_eq!(a.strata, b.strata);
    }
}

#[test]
fn single_chain_warns_about_rhat() {
    let ds = ordinal_data(30, 2, 5);
    let fit = run(&ds, &PriorConfig::default(), &ChainConfig::new(1, 50, 1, 0), None).unwrap();
    assert!(fit.diagnostics.rhat.is_empty());
    assert!(fit.diagnostics.warnings.iter().any(|w| w.contains("R-hat")));
}

#[test]
fn rejects_bad_configuration() {
    let ds = ordinal_data(30, 2, 6);
    assert!(run(&ds, &PriorConfig::default(), &ChainConfig::new(0, 50, 1, 0), None).is_err());
    assert!(run(&ds, &PriorConfig::default(), &ChainConfig::new(1, 50, 0, 0), None).is_err());
    assert!(run(&ds, &PriorConfig::default(), &ChainConfig::new(1, 50, 1, 0).with_burn_in(50), None).is_err());
    let bad = PriorConfig { coef_variance: -1.0, ..PriorConfig::default() };
    assert!(run(&ds, &bad, &ChainConfig::new(1, 50, 1, 0), None).is_err());
}

fn fixed_state(ds: &Dataset, gamma: f64) -> InitialState {
    let g = ds.n_clusters;
    let arm = |cuts: Vec<f64>, b: f64| ArmParams {
        intercepts: cuts,
        beta: vec![b],
        gamma,
        tau: 0.5,
        rand_effects: (0..g).map(|k| 0.2 * k as f64 - 0.1).collect(),
        residual_sd: None,
    };
    let selection = SelectionParams { intercept: 0.3, beta: vec![0.7], sigma: 1.2, tau: 0.4, rand_effects: vec![0.1, -0.2] };
    let strata = ds
        .units
        .iter()
        .map(|u| match truncation_region(u.treated, u.iv) {
            Region::AtMost(z) => z - 0.5,
            Region::Above(z) => z + 0.5,
        })
        .collect();
    InitialState {
        selection,
        outcome: OutcomeParams {
            family: ds.outcome_spec,
            arms: [arm(vec![-0.4, 0.9], 0.6), arm(vec![-1.1, 0.3], -0.5)],
        },
        strata,
    }
}

/// Posterior mean of one stratum given all parameters, by quadrature.
fn stratum_mean_oracle(ds: &Dataset, init: &InitialState, i: usize) -> f64 {
    let u = &ds.units[i];
    let x = ds.std_covariates(i);
    let sel = &init.selection;
    let mu = sel.intercept + sel.beta[0] * x[0] + sel.rand_effects[u.cluster];
    let arm = &init.outcome.arms[u.treated as usize];
    let eta0 = arm.beta[0] * x[0] + arm.rand_effects[u.cluster];
    let cdf = |k: usize, s: f64| -> f64 {
        if k == 0 {
            0.0
        } else if k > arm.intercepts.len() {
            1.0
        } else {
            1.0 / (1.0 + (-(arm.intercepts[k - 1] + eta0 + arm.gamma * s)).exp())
        }
    };
    let y = u.outcome as usize;
    let dens = |s: f64| normal_pdf((s - mu) / sel.sigma) * (cdf(y, s) - cdf(y - 1, s));
    let (lo, hi) = if u.treated { (mu - 12.0 * sel.sigma, u.iv) } else { (u.iv, mu + 12.0 * sel.sigma) };
    let m = 200_000;
    let h = (hi - lo) / m as f64;
    let (mut z0, mut z1) = (0.0, 0.0);
    for k in 0..=m {
        let s = lo + k as f64 * h;
        let w = if k == 0 || k == m { 0.5 } else { 1.0 };
        z0 += w * dens(s);
        z1 += w * s * dens(s);
    }
    z1 / z0
}

#[test]
fn ordinal_strata_update_targets_conditional() {
    let ds = ordinal_data(8, 2, 7);
    let init = fixed_state(&ds, 1.5);
    let opts = SamplerOptions {
        update_selection_coefs: false,
        update_sigma: false,
        update_selection_tau: false,
        update_outcome: false,
        initial: Some(init.clone()),
        ..SamplerOptions::default()
    };
    let cfg = ChainConfig::new(1, 102_000, 1, 11).with_burn_in(2_000);
    let fit = run_with_options(&ds, &PriorConfig::default(), &cfg, None, &opts).unwrap();
    for i in 0..ds.len() {
        let draws: Vec<f64> = fit.store.draws().map(|d| d.strata[i]).collect();
        let expected = stratum_mean_oracle(&ds, &init, i);
        let se = mc_se(&draws);
        assert!((mean(&draws) - expected).abs() < 4.0 * se, "unit {i}: {} vs {expected} (se {se})", mean(&draws));
    }
}

#[test]
fn strata_follow_truncated_prior_without_outcome_dependence() {
    let ds = ordinal_data(8, 2, 8);
    let init = fixed_state(&ds, 0.0);
    let opts = SamplerOptions {
        update_selection_coefs: false,
        update_sigma: false,
        update_selection_tau: false,
        update_outcome: false,
        initial: Some(init.clone()),
        ..SamplerOptions::default()
    };
    let cfg = ChainConfig::new(1, 41_000, 1, 12).with_burn_in(1_000);
    let fit = run_with_options(&ds, &PriorConfig::default(), &cfg, None, &opts).unwrap();
    let sel = &init.selection;
    for (i, u) in ds.units.iter().enumerate() {
        let mu = sel.intercept + sel.beta[0] * ds.std_covariates(i)[0] + sel.rand_effects[u.cluster];
        let a = (u.iv - mu) / sel.sigma;
        let phi = normal_pdf(a);
        let cdf = localiv::stats::normal_cdf(a);
        // closed-form truncated Normal means
        let expected = if u.treated { mu - sel.sigma * phi / cdf } else { mu + sel.sigma * phi / (1.0 - cdf) };
        let draws: Vec<f64> = fit.store.draws().map(|d| d.strata[i]).collect();
        let se = mc_se(&draws);
        assert!((mean(&draws) - expected).abs() < 4.0 * se, "unit {i}");
    }
}

#[test]
fn prior_only_run_recovers_priors() {
    let ds = ordinal_data(12, 2, 9);
    let init = fixed_state(&ds, 0.2);
    let opts = SamplerOptions {
        update_strata: false,
        update_selection_coefs: false,
        update_sigma: false,
        update_selection_tau: false,
        outcome_likelihood: false,
        initial: Some(init),
        ..SamplerOptions::default()
    };
    let cfg = ChainConfig::new(3, 120_000, 4, 13).with_burn_in(20_000);
    let fit = run_with_options(&ds, &PriorConfig::default(), &cfg, None, &opts).unwrap();
    let names = fit.store.scalar_names();
    let pooled = |name: &str| -> Vec<f64> {
        let j = names.iter().position(|n| n == name).unwrap();
        fit.store.scalar_chains(j).into_iter().flatten().collect()
    };
    for name in ["beta[t=0,j=1]", "gamma[t=0]", "beta[t=1,j=1]", "gamma[t=1]"] {
        let v = pooled(name);
        let var = localiv::stats::sample_variance(&v);
        assert!((var / 100.0 - 1.0).abs() < 0.05, "{name}: variance {var}");
    }
    // half-Cauchy(25) quartiles: 25 tan(pi q / 2)
    for name in ["tau[t=0]", "tau[t=1]"] {
        let v = pooled(name);
        for (q, expected) in [(0.25, 10.355_339_059_327_378), (0.5, 25.0), (0.75, 60.355_339_059_327_38)] {
            let got = localiv::stats::empirical_quantile(&v, q).unwrap();
            assert!((got / expected - 1.0).abs() < 0.05, "{name} q{q}: {got} vs {expected}");
        }
    }
}

#[test]
fn gaussian_fit_recovers_selection_slopes() {
    // in the study design E[Y(t) | S, X] is linear with slope p on S for t = 0 and p + h for t = 1
    let cfg = SimulationConfig { n: 2000, h: 0.4, ..Default::default() };
    let sim = simulate(&cfg, &mut ChaCha8Rng::seed_from_u64(21)).unwrap();
    let fit = run(&sim.dataset, &PriorConfig::default(), &ChainConfig::new(2, 4000, 2, 5), None).unwrap();
    let names = fit.store.scalar_names();
    let summary = |name: &str| -> (f64, f64, f64) {
        let j = names.iter().position(|n| n == name).unwrap();
        let mut v: Vec<f64> = fit.store.scalar_chains(j).into_iter().flatten().collect();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| localiv::stats::quantile_sorted(&v, p);
        (q(0.005), mean(&v), q(0.995))
    };
    for (name, truth) in [("gamma[t=0]", 0.5), ("gamma[t=1]", 0.9), ("sigma", 1.0)] {
        let (lo, m, hi) = summary(name);
        assert!(lo < truth && truth < hi, "{name}: {m} [{lo}, {hi}] vs {truth}");
    }
    assert!(fit.diagnostics.max_rhat().unwrap() < 1.1);
}
