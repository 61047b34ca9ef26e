//! Metropolis-within-Gibbs sweep over strata, selection and outcome blocks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::adapt::{accept, AcceptCounter, ScalarProposal, VectorProposal};
use super::config::{InitialState, SamplerOptions};
use crate::data::{Dataset, OutcomeSpec, PriorConfig};
use crate::error::{Error, Result};
use crate::linalg::{sample_gaussian_precision, SparseNormalEquations};
use crate::outcome::{ordinal_log_likelihood, ArmParams, OutcomeParams};
use crate::selection::{dot, truncation_region, Region, SelectionParams};
use crate::stats::{half_cauchy_log_density, normal_above, normal_below, sample_variance};

/// Data arranged for the sampler.
pub(crate) struct Model<'a> {
    pub data: &'a Dataset,
    pub family: OutcomeSpec,
    pub p: usize,
    pub g: usize,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub treated: Vec<bool>,
    pub cluster: Vec<usize>,
    pub arm_units: [Vec<usize>; 2],
    pub arm_cluster_units: [Vec<Vec<usize>>; 2],
    /// `delta * z_i` when a nonzero direct IV effect is fixed.
    pub iv_offset: Option<Vec<f64>>,
    pub fixed_delta: Option<f64>,
    pub sel_gram: DMatrix<f64>,
    pub prior: PriorConfig,
    pub opts: SamplerOptions,
}

impl<'a> Model<'a> {
    pub fn new(data: &'a Dataset, prior: PriorConfig, fixed_delta: Option<f64>, opts: SamplerOptions) -> Result<Self> {
        let p = data.n_covariates();
        let g = data.n_clusters;
        let mut arm_units = [Vec::new(), Vec::new()];
        let mut arm_cluster_units = [vec![Vec::new(); g], vec![Vec::new(); g]];
        for (i, u) in data.units.iter().enumerate() {
            let t = usize::from(u.treated);
            arm_units[t].push(i);
            arm_cluster_units[t][u.cluster].push(i);
        }
        let min_arm = match data.outcome_spec {
            OutcomeSpec::Gaussian => 2,
            OutcomeSpec::Ordinal { .. } => 1,
        };
        for (t, units) in arm_units.iter().enumerate() {
            if units.len() < min_arm {
                return Err(Error::InvalidDataset(format!(
                    "treatment arm {t} has {} units; at least {min_arm} required",
                    units.len()
                )));
            }
        }
        let mut sel = SparseNormalEquations::new(1 + p, g);
        let mut row = vec![1.0; 1 + p];
        for (i, u) in data.units.iter().enumerate() {
            row[1..].copy_from_slice(data.std_covariates(i));
            sel.add_row(&row, u.cluster, 0.0);
        }
        sel.symmetrize();
        let iv_offset = match fixed_delta {
            Some(d) if d != 0.0 => Some(data.units.iter().map(|u| d * u.iv).collect()),
            _ => None,
        };
        Ok(Model {
            data,
            family: data.outcome_spec,
            p,
            g,
            y: data.units.iter().map(|u| u.outcome).collect(),
            z: data.units.iter().map(|u| u.iv).collect(),
            treated: data.units.iter().map(|u| u.treated).collect(),
            cluster: data.units.iter().map(|u| u.cluster).collect(),
            arm_units,
            arm_cluster_units,
            iv_offset,
            fixed_delta,
            sel_gram: sel.gram,
            prior,
            opts,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    #[inline]
    fn x(&self, i: usize) -> &[f64] {
        self.data.std_covariates(i)
    }

    #[inline]
    fn offset(&self, i: usize) -> f64 {
        self.iv_offset.as_ref().map_or(0.0, |o| o[i])
    }

    #[inline]
    fn arm_base(&self, arm: &ArmParams, i: usize, s: f64) -> f64 {
        let eta = dot(&arm.beta, self.x(i)) + arm.gamma * s;
        match &self.iv_offset {
            Some(o) => eta + o[i],
            None => eta,
        }
    }

    fn region(&self, i: usize) -> Region {
        truncation_region(self.treated[i], self.z[i])
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ChainState {
    pub sel: SelectionParams,
    pub out: OutcomeParams,
    pub strata: Vec<f64>,
    /// Unconstrained cutpoints per arm: first cutpoint, then log gaps.
    cut_free: [Vec<f64>; 2],
}

pub(crate) fn cutpoints_from_free(free: &[f64]) -> Vec<f64> {
    let mut cuts = Vec::with_capacity(free.len());
    let mut acc = 0.0;
    for (k, &u) in free.iter().enumerate() {
        acc = if k == 0 { u } else { acc + u.exp() };
        cuts.push(acc);
    }
    cuts
}

pub(crate) fn free_from_cutpoints(cuts: &[f64]) -> Vec<f64> {
    cuts.iter().enumerate().map(|(k, &c)| if k == 0 { c } else { (c - cuts[k - 1]).ln() }).collect()
}

/// Per-chain Metropolis proposals and acceptance counters.
pub(crate) struct Proposals {
    arm_fixed: [VectorProposal; 2],
    arm_re: [Vec<ScalarProposal>; 2],
    arm_tau: [ScalarProposal; 2],
    arm_tau_scale: [ScalarProposal; 2],
    sel_tau: ScalarProposal,
    sel_tau_scale: ScalarProposal,
    strata: AcceptCounter,
}

impl Proposals {
    fn new(model: &Model<'_>) -> Self {
        let dim = model.family.n_intercepts() + model.p + 1;
        let fixed = || VectorProposal::new(&vec![0.1; dim]);
        let re = || (0..model.g).map(|_| ScalarProposal::new(0.3)).collect::<Vec<_>>();
        Proposals {
            arm_fixed: [fixed(), fixed()],
            arm_re: [re(), re()],
            arm_tau: [ScalarProposal::new(0.3), ScalarProposal::new(0.3)],
            arm_tau_scale: [ScalarProposal::new(0.1), ScalarProposal::new(0.1)],
            sel_tau: ScalarProposal::new(0.3),
            sel_tau_scale: ScalarProposal::new(0.1),
            strata: AcceptCounter::default(),
        }
    }

    /// `(block name, counter)` for every Metropolis block used by `family`.
    pub fn counters(&self, family: OutcomeSpec) -> Vec<(String, AcceptCounter)> {
        let mut out = vec![
            ("tau_s".to_string(), self.sel_tau.counter),
            ("tau_s_rescale".to_string(), self.sel_tau_scale.counter),
        ];
        for t in 0..2 {
            if let OutcomeSpec::Ordinal { .. } = family {
                out.push((format!("fixed[t={t}]"), self.arm_fixed[t].counter));
                let mut re = AcceptCounter::default();
                for p in &self.arm_re[t] {
                    re.merge(p.counter);
                }
                out.push((format!("nu[t={t}]"), re));
            }
            out.push((format!("tau[t={t}]"), self.arm_tau[t].counter));
            out.push((format!("tau_rescale[t={t}]"), self.arm_tau_scale[t].counter));
        }
        if let OutcomeSpec::Ordinal { .. } = family {
            out.push(("strata".to_string(), self.strata));
        }
        out
    }

    pub fn target(block: &str) -> f64 {
        if block.starts_with("fixed") {
            super::adapt::VECTOR_TARGET
        } else {
            super::adapt::SCALAR_TARGET
        }
    }
}

pub(crate) struct Chain<'m, 'a> {
    pub model: &'m Model<'a>,
    pub state: ChainState,
    pub props: Proposals,
    pub rng: ChaCha8Rng,
}

impl<'m, 'a> Chain<'m, 'a> {
    pub fn new(model: &'m Model<'a>, chain_id: usize, mut rng: ChaCha8Rng) -> Result<Self> {
        let state = match &model.opts.initial {
            Some(init) => initial_from(model, init)?,
            None => overdispersed_start(model, &mut rng),
        };
        let chain = Chain { model, state, props: Proposals::new(model), rng };
        if !chain.log_posterior().is_finite() {
            return Err(Error::NonFiniteInit { chain: chain_id });
        }
        Ok(chain)
    }

    /// Unnormalized log posterior of the current state (up to constants).
    pub fn log_posterior(&self) -> f64 {
        let m = self.model;
        let st = &self.state;
        let mut lp = 0.0;
        for i in 0..m.n() {
            let s = st.strata[i];
            if !m.region(i).contains(s) {
                return f64::NEG_INFINITY;
            }
            let mu = st.sel.latent_mean(m.x(i), Some(m.cluster[i]));
            lp += -0.5 * ((s - mu) / st.sel.sigma).powi(2) - st.sel.sigma.ln();
            let t = usize::from(m.treated[i]);
            lp += self.unit_loglik(t, i, s);
        }
        lp
    }

    #[inline]
    fn unit_loglik(&self, t: usize, i: usize, s: f64) -> f64 {
        let m = self.model;
        let arm = &self.state.out.arms[t];
        let eta = m.arm_base(arm, i, s) + arm.rand_effects[m.cluster[i]];
        crate::outcome::arm_log_likelihood(m.family, arm, m.y[i], eta)
    }

    pub fn sweep(&mut self, adapting: bool, counting: bool) -> Result<()> {
        let opts = &self.model.opts;
        if opts.update_strata {
            self.update_strata(counting);
        }
        if opts.update_selection_coefs {
            self.update_selection_coefs()?;
        }
        if opts.update_sigma && opts.selection_likelihood {
            self.update_sigma();
        }
        if opts.update_selection_tau {
            self.update_selection_tau(adapting, counting);
        }
        if opts.update_outcome {
            for t in 0..2 {
                match self.model.family {
                    OutcomeSpec::Ordinal { .. } => {
                        self.update_ordinal_fixed(t, adapting, counting);
                        self.update_ordinal_effects(t, adapting, counting);
                    }
                    OutcomeSpec::Gaussian => {
                        self.update_gaussian_coefs(t)?;
                        if self.model.opts.outcome_likelihood {
                            self.update_residual_sd(t);
                        }
                    }
                }
                self.update_arm_tau(t, adapting, counting);
            }
        }
        Ok(())
    }

    fn update_strata(&mut self, counting: bool) {
        let m = self.model;
        let use_lik = m.opts.outcome_likelihood;
        for i in 0..m.n() {
            let c = m.cluster[i];
            let mu = self.state.sel.latent_mean(m.x(i), Some(c));
            let sigma = self.state.sel.sigma;
            let region = m.region(i);
            let t = usize::from(m.treated[i]);
            let arm = &self.state.out.arms[t];
            match m.family {
                OutcomeSpec::Gaussian => {
                    let (mean, sd) = if use_lik {
                        let omega2 = arm.residual_sd.expect("gaussian").powi(2);
                        let resid = m.y[i] - arm.intercepts[0] - m.arm_base(arm, i, 0.0) - arm.rand_effects[c];
                        let prec = 1.0 / (sigma * sigma) + arm.gamma * arm.gamma / omega2;
                        let mean = (mu / (sigma * sigma) + arm.gamma * resid / omega2) / prec;
                        (mean, prec.sqrt().recip())
                    } else {
                        (mu, sigma)
                    };
                    self.state.strata[i] = draw_in_region(&mut self.rng, mean, sd, region);
                }
                OutcomeSpec::Ordinal { .. } => {
                    let proposal = draw_in_region(&mut self.rng, mu, sigma, region);
                    let current = self.state.strata[i];
                    let log_ratio = if use_lik && arm.gamma != 0.0 {
                        let base = m.arm_base(arm, i, 0.0) + arm.rand_effects[c];
                        let y = m.y[i] as usize;
                        ordinal_log_likelihood(&arm.intercepts, y, base + arm.gamma * proposal)
                            - ordinal_log_likelihood(&arm.intercepts, y, base + arm.gamma * current)
                    } else {
                        0.0
                    };
                    let ok = accept(&mut self.rng, log_ratio);
                    if ok {
                        self.state.strata[i] = proposal;
                    }
                    if counting {
                        self.props.strata.record(ok);
                    }
                }
            }
        }
    }

    fn update_selection_coefs(&mut self) -> Result<()> {
        let m = self.model;
        let p = m.p;
        let d = 1 + p + m.g;
        let sel = &self.state.sel;
        let inv_var = 1.0 / (sel.sigma * sel.sigma);
        let mut precision = DMatrix::zeros(d, d);
        let mut linear = DVector::zeros(d);
        if m.opts.selection_likelihood {
            precision = &m.sel_gram * inv_var;
            for i in 0..m.n() {
                let s = self.state.strata[i];
                linear[0] += s;
                for (j, xj) in m.x(i).iter().enumerate() {
                    linear[1 + j] += xj * s;
                }
                linear[1 + p + m.cluster[i]] += s;
            }
            linear *= inv_var;
        }
        let coef_prec = 1.0 / m.prior.coef_variance;
        let re_prec = 1.0 / (sel.tau * sel.tau);
        for k in 0..d {
            precision[(k, k)] += if k < 1 + p { coef_prec } else { re_prec };
        }
        let theta = sample_gaussian_precision(&mut self.rng, precision, &linear)?;
        let sel = &mut self.state.sel;
        sel.intercept = theta[0];
        sel.beta.copy_from_slice(&theta.as_slice()[1..1 + p]);
        sel.rand_effects.copy_from_slice(&theta.as_slice()[1 + p..]);
        Ok(())
    }

    fn selection_ssr(&self, rand_effects: &[f64]) -> f64 {
        let m = self.model;
        let sel = &self.state.sel;
        (0..m.n())
            .map(|i| {
                let mu = sel.intercept + dot(&sel.beta, m.x(i)) + rand_effects[m.cluster[i]];
                (self.state.strata[i] - mu).powi(2)
            })
            .sum()
    }

    fn update_sigma(&mut self) {
        let ssr = self.selection_ssr(&self.state.sel.rand_effects);
        let shape = 0.5 * self.model.n() as f64;
        self.state.sel.sigma = draw_inverse_gamma(&mut self.rng, shape, 0.5 * ssr).sqrt();
    }

    fn update_selection_tau(&mut self, adapting: bool, counting: bool) {
        let scale = self.model.prior.half_cauchy_scale;
        let tau = self.state.sel.tau;
        let eps = self.props.sel_tau.step(&mut self.rng);
        let lr = centered_tau_log_ratio(&self.state.sel.rand_effects, tau, eps, scale);
        let ok = accept(&mut self.rng, lr);
        if ok {
            self.state.sel.tau = tau * eps.exp();
        }
        self.props.sel_tau.finish(lr, ok, adapting, counting);

        let tau = self.state.sel.tau;
        let eps = self.props.sel_tau_scale.step(&mut self.rng);
        let factor = eps.exp();
        let scaled: Vec<f64> = self.state.sel.rand_effects.iter().map(|r| r * factor).collect();
        let mut lr = half_cauchy_log_density(tau * factor, scale) - half_cauchy_log_density(tau, scale) + eps;
        if self.model.opts.selection_likelihood {
            let inv2 = 0.5 / self.state.sel.sigma.powi(2);
            lr += inv2 * (self.selection_ssr(&self.state.sel.rand_effects) - self.selection_ssr(&scaled));
        }
        let ok = accept(&mut self.rng, lr);
        if ok {
            self.state.sel.tau = tau * factor;
            self.state.sel.rand_effects = scaled;
        }
        self.props.sel_tau_scale.finish(lr, ok, adapting, counting);
    }

    /// Log posterior of the cutpoint/coefficient block of an ordinal arm.
    fn ordinal_fixed_log_post(&self, t: usize, theta: &[f64]) -> f64 {
        let m = self.model;
        let k1 = m.family.n_intercepts();
        let v = m.prior.coef_variance;
        let cuts = cutpoints_from_free(&theta[..k1]);
        let beta = &theta[k1..k1 + m.p];
        let gamma = theta[k1 + m.p];
        let mut lp = -0.5 * cuts.iter().map(|a| a * a).sum::<f64>() / v
            - 0.5 * beta.iter().map(|b| b * b).sum::<f64>() / v
            - 0.5 * gamma * gamma / v
            + theta[1..k1].iter().sum::<f64>();
        if m.opts.outcome_likelihood {
            let arm = &self.state.out.arms[t];
            for &i in &m.arm_units[t] {
                let s = self.state.strata[i];
                let eta = dot(beta, m.x(i)) + gamma * s + arm.rand_effects[m.cluster[i]] + m.offset(i);
                lp += ordinal_log_likelihood(&cuts, m.y[i] as usize, eta);
            }
        }
        lp
    }

    fn update_ordinal_fixed(&mut self, t: usize, adapting: bool, counting: bool) {
        let arm = &self.state.out.arms[t];
        let mut theta = self.state.cut_free[t].clone();
        theta.extend(&arm.beta);
        theta.push(arm.gamma);
        let current = self.ordinal_fixed_log_post(t, &theta);
        let step = self.props.arm_fixed[t].step(&mut self.rng);
        let proposal: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let lr = self.ordinal_fixed_log_post(t, &proposal) - current;
        let ok = accept(&mut self.rng, lr);
        if ok {
            theta = proposal;
        }
        self.props.arm_fixed[t].finish(lr, ok, adapting, counting);
        if adapting {
            self.props.arm_fixed[t].observe(&theta);
        }
        if ok {
            let k1 = self.model.family.n_intercepts();
            let p = self.model.p;
            let arm = &mut self.state.out.arms[t];
            arm.intercepts = cutpoints_from_free(&theta[..k1]);
            arm.beta.copy_from_slice(&theta[k1..k1 + p]);
            arm.gamma = theta[k1 + p];
            self.state.cut_free[t] = theta[..k1].to_vec();
        }
    }

    fn ordinal_cluster_loglik(&self, t: usize, g: usize, nu: f64) -> f64 {
        let m = self.model;
        let arm = &self.state.out.arms[t];
        m.arm_cluster_units[t][g]
            .iter()
            .map(|&i| {
                let eta = m.arm_base(arm, i, self.state.strata[i]) + nu;
                ordinal_log_likelihood(&arm.intercepts, m.y[i] as usize, eta)
            })
            .sum()
    }

    fn update_ordinal_effects(&mut self, t: usize, adapting: bool, counting: bool) {
        let use_lik = self.model.opts.outcome_likelihood;
        for g in 0..self.model.g {
            let arm = &self.state.out.arms[t];
            let nu = arm.rand_effects[g];
            let tau2 = arm.tau * arm.tau;
            let proposal = nu + self.props.arm_re[t][g].step(&mut self.rng);
            let mut lr = -0.5 * (proposal * proposal - nu * nu) / tau2;
            if use_lik && !self.model.arm_cluster_units[t][g].is_empty() {
                lr += self.ordinal_cluster_loglik(t, g, proposal) - self.ordinal_cluster_loglik(t, g, nu);
            }
            let ok = accept(&mut self.rng, lr);
            if ok {
                self.state.out.arms[t].rand_effects[g] = proposal;
            }
            self.props.arm_re[t][g].finish(lr, ok, adapting, counting);
        }
    }

    fn update_gaussian_coefs(&mut self, t: usize) -> Result<()> {
        let m = self.model;
        let p = m.p;
        let dense = 2 + p;
        let arm = &self.state.out.arms[t];
        let mut eq = SparseNormalEquations::new(dense, m.g);
        let omega2 = arm.residual_sd.expect("gaussian").powi(2);
        if m.opts.outcome_likelihood {
            let mut row = vec![1.0; dense];
            for &i in &m.arm_units[t] {
                row[1..1 + p].copy_from_slice(m.x(i));
                row[1 + p] = self.state.strata[i];
                eq.add_row(&row, m.cluster[i], m.y[i] - m.offset(i));
            }
            eq.symmetrize();
        }
        let mut precision = eq.gram / omega2;
        let linear = eq.rhs / omega2;
        let coef_prec = 1.0 / m.prior.coef_variance;
        let re_prec = 1.0 / (arm.tau * arm.tau);
        for k in 0..dense + m.g {
            precision[(k, k)] += if k < dense { coef_prec } else { re_prec };
        }
        let theta = sample_gaussian_precision(&mut self.rng, precision, &linear)?;
        let arm = &mut self.state.out.arms[t];
        arm.intercepts[0] = theta[0];
        arm.beta.copy_from_slice(&theta.as_slice()[1..1 + p]);
        arm.gamma = theta[1 + p];
        arm.rand_effects.copy_from_slice(&theta.as_slice()[dense..]);
        Ok(())
    }

    fn gaussian_arm_ssr(&self, t: usize, rand_effects: &[f64]) -> f64 {
        let m = self.model;
        let arm = &self.state.out.arms[t];
        m.arm_units[t]
            .iter()
            .map(|&i| {
                let mean = arm.intercepts[0] + m.arm_base(arm, i, self.state.strata[i]) + rand_effects[m.cluster[i]];
                (m.y[i] - mean).powi(2)
            })
            .sum()
    }

    fn update_residual_sd(&mut self, t: usize) {
        let ssr = self.gaussian_arm_ssr(t, &self.state.out.arms[t].rand_effects);
        let shape = 0.5 * self.model.arm_units[t].len() as f64;
        self.state.out.arms[t].residual_sd = Some(draw_inverse_gamma(&mut self.rng, shape, 0.5 * ssr).sqrt());
    }

    /// Outcome log-likelihood of arm `t` with the given random effects.
    fn arm_loglik_with_effects(&self, t: usize, rand_effects: &[f64]) -> f64 {
        let m = self.model;
        match m.family {
            OutcomeSpec::Gaussian => {
                let omega = self.state.out.arms[t].residual_sd.expect("gaussian");
                -0.5 * self.gaussian_arm_ssr(t, rand_effects) / (omega * omega)
            }
            OutcomeSpec::Ordinal { .. } => {
                let arm = &self.state.out.arms[t];
                m.arm_units[t]
                    .iter()
                    .map(|&i| {
                        let eta = m.arm_base(arm, i, self.state.strata[i]) + rand_effects[m.cluster[i]];
                        ordinal_log_likelihood(&arm.intercepts, m.y[i] as usize, eta)
                    })
                    .sum()
            }
        }
    }

    fn update_arm_tau(&mut self, t: usize, adapting: bool, counting: bool) {
        let scale = self.model.prior.half_cauchy_scale;
        let tau = self.state.out.arms[t].tau;
        let eps = self.props.arm_tau[t].step(&mut self.rng);
        let lr = centered_tau_log_ratio(&self.state.out.arms[t].rand_effects, tau, eps, scale);
        let ok = accept(&mut self.rng, lr);
        if ok {
            self.state.out.arms[t].tau = tau * eps.exp();
        }
        self.props.arm_tau[t].finish(lr, ok, adapting, counting);

        let tau = self.state.out.arms[t].tau;
        let eps = self.props.arm_tau_scale[t].step(&mut self.rng);
        let factor = eps.exp();
        let current = self.state.out.arms[t].rand_effects.clone();
        let scaled: Vec<f64> = current.iter().map(|v| v * factor).collect();
        let mut lr = half_cauchy_log_density(tau * factor, scale) - half_cauchy_log_density(tau, scale) + eps;
        if self.model.opts.outcome_likelihood {
            lr += self.arm_loglik_with_effects(t, &scaled) - self.arm_loglik_with_effects(t, &current);
        }
        let ok = accept(&mut self.rng, lr);
        if ok {
            let arm = &mut self.state.out.arms[t];
            arm.tau = tau * factor;
            arm.rand_effects = scaled;
        }
        self.props.arm_tau_scale[t].finish(lr, ok, adapting, counting);
    }
}

/// Log MH ratio for `tau -> tau * exp(eps)` given effects `~ N(0, tau^2)`,
/// half-Cauchy prior and the log-scale Jacobian.
fn centered_tau_log_ratio(effects: &[f64], tau: f64, eps: f64, scale: f64) -> f64 {
    let new = tau * eps.exp();
    let ss: f64 = effects.iter().map(|v| v * v).sum();
    let g = effects.len() as f64;
    let log_lik = |t: f64| -g * t.ln() - 0.5 * ss / (t * t);
    log_lik(new) - log_lik(tau) + half_cauchy_log_density(new, scale) - half_cauchy_log_density(tau, scale) + eps
}

fn draw_in_region<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, region: Region) -> f64 {
    match region {
        Region::AtMost(z) => normal_below(rng, mean, sd, z),
        Region::Above(z) => {
            // strict inequality: resample the measure-zero boundary value
            loop {
                let s = normal_above(rng, mean, sd, z);
                if s > z {
                    return s;
                }
            }
        }
    }
}

/// Draw from an inverse-gamma with `shape` and `scale` (density ∝ x^{-shape-1} e^{-scale/x}).
fn draw_inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    let g = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    scale / g
}

fn initial_from(model: &Model<'_>, init: &InitialState) -> Result<ChainState> {
    init.selection.validate(model.p, model.g)?;
    init.outcome.validate(model.p, model.g)?;
    if init.outcome.family != model.family {
        return Err(Error::params("initial outcome parameters use a different family"));
    }
    if init.strata.len() != model.n() {
        return Err(Error::params("initial strata length differs from the number of units"));
    }
    let cut_free = [
        free_from_cutpoints(&init.outcome.arms[0].intercepts),
        free_from_cutpoints(&init.outcome.arms[1].intercepts),
    ];
    Ok(ChainState { sel: init.selection.clone(), out: init.outcome.clone(), strata: init.strata.clone(), cut_free })
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Overdispersed start: coefficients from N(0, 1), sigma = 1, random effects 0,
/// jittered empirical cutpoints, strata from their truncated prior.
fn overdispersed_start<R: Rng + ?Sized>(model: &Model<'_>, rng: &mut R) -> ChainState {
    let p = model.p;
    let g = model.g;
    let z_mean = crate::stats::mean(&model.z);
    let z_sd = sample_variance(&model.z).sqrt().max(1e-8);
    let sel = SelectionParams {
        intercept: z_mean + normal(rng),
        beta: (0..p).map(|_| normal(rng)).collect(),
        sigma: 1.0,
        tau: 1.0,
        rand_effects: vec![0.0; g],
    };
    let arms = [0usize, 1].map(|t| {
        let ys: Vec<f64> = model.arm_units[t].iter().map(|&i| model.y[i]).collect();
        let intercepts = match model.family {
            OutcomeSpec::Ordinal { levels } => jittered_cutpoints(&ys, levels, rng),
            OutcomeSpec::Gaussian => {
                vec![crate::stats::mean(&ys) + normal(rng) * sample_variance(&ys).sqrt()]
            }
        };
        let residual_sd = match model.family {
            OutcomeSpec::Gaussian => Some(sample_variance(&ys).sqrt().max(1e-3)),
            OutcomeSpec::Ordinal { .. } => None,
        };
        ArmParams {
            intercepts,
            beta: (0..p).map(|_| normal(rng)).collect(),
            // the stratum lives on the IV scale
            gamma: normal(rng) / z_sd,
            tau: 1.0,
            rand_effects: vec![0.0; g],
            residual_sd,
        }
    });
    let strata = (0..model.n())
        .map(|i| {
            let mu = sel.latent_mean(model.x(i), Some(model.cluster[i]));
            draw_in_region(rng, mu, sel.sigma, model.region(i))
        })
        .collect();
    let cut_free = [free_from_cutpoints(&arms[0].intercepts), free_from_cutpoints(&arms[1].intercepts)];
    ChainState { sel, out: OutcomeParams { family: model.family, arms }, strata, cut_free }
}

fn jittered_cutpoints<R: Rng + ?Sized>(ys: &[f64], levels: usize, rng: &mut R) -> Vec<f64> {
    let n = ys.len() as f64;
    let mut cuts: Vec<f64> = (1..levels)
        .map(|k| {
            let below = ys.iter().filter(|&&y| y <= k as f64).count() as f64;
            let frac = (below + 0.5) / (n + 1.0);
            (frac / (1.0 - frac)).ln() + 0.25 * normal(rng)
        })
        .collect();
    cuts.sort_by(f64::total_cmp);
    for k in 1..cuts.len() {
        if cuts[k] <= cuts[k - 1] + 1e-3 {
            cuts[k] = cuts[k - 1] + 1e-3;
        }
    }
    cuts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutpoint_reparameterization_roundtrip() {
        let cuts = vec![-1.2, -0.3, 0.0, 2.5];
        let free = free_from_cutpoints(&cuts);
        let back = cutpoints_from_free(&free);
        for (a, b) in cuts.iter().zip(&back) {
            assert!((a - b).abs() < 1e-14);
        }
        let any = cutpoints_from_free(&[3.0, -20.0, 4.0]);
        assert!(any.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn centered_tau_ratio_matches_direct_evaluation() {
        let effects = [0.3, -1.2, 0.8];
        let (tau, eps, a): (f64, f64, f64) = (0.7, 0.25, 25.0);
        let dens = |t: f64| {
            effects.iter().map(|v| crate::stats::normal_log_pdf(*v, 0.0, t)).sum::<f64>()
                + half_cauchy_log_density(t, a)
                + t.ln()
        };
        let direct = dens(tau * eps.exp()) - dens(tau);
        assert!((centered_tau_log_ratio(&effects, tau, eps, a) - direct).abs() < 1e-12);
    }
}
