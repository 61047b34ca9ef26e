//! Random-walk proposals with burn-in adaptation.
//!
//! Scales follow a Robbins-Monro recursion on the log scale toward a target
//! acceptance rate; vector proposals also learn a covariance. Nothing changes
//! once `adapting` is false, so the post-burn-in kernel is fixed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub(crate) const SCALAR_TARGET: f64 = 0.44;
pub(crate) const VECTOR_TARGET: f64 = 0.23;

const GAIN_EXPONENT: f64 = 0.6;

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct AcceptCounter {
    pub tried: u64,
    pub accepted: u64,
}

impl AcceptCounter {
    pub fn record(&mut self, accepted: bool) {
        self.tried += 1;
        self.accepted += u64::from(accepted);
    }

    pub fn merge(&mut self, other: AcceptCounter) {
        self.tried += other.tried;
        self.accepted += other.accepted;
    }

    pub fn rate(&self) -> f64 {
        if self.tried == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.tried as f64
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ScalarProposal {
    log_scale: f64,
    steps: u64,
    pub counter: AcceptCounter,
}

impl ScalarProposal {
    pub fn new(scale: f64) -> Self {
        ScalarProposal { log_scale: scale.ln(), steps: 0, counter: AcceptCounter::default() }
    }

    pub fn step<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.log_scale.exp() * z
    }

    /// `log_ratio` is the log Metropolis-Hastings ratio of the proposal.
    pub fn finish(&mut self, log_ratio: f64, accepted: bool, adapting: bool, counting: bool) {
        if adapting {
            self.steps += 1;
            let prob = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
            self.log_scale += (prob - SCALAR_TARGET) / (self.steps as f64).powf(GAIN_EXPONENT);
            self.log_scale = self.log_scale.clamp(-20.0, 5.0);
        }
        if counting {
            self.counter.record(accepted);
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct VectorProposal {
    dim: usize,
    log_scale: f64,
    /// Lower Cholesky factor of the proposal shape.
    chol: DMatrix<f64>,
    steps: u64,
    n_obs: u64,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
    pub counter: AcceptCounter,
}

const REFRESH_EVERY: u64 = 100;
const MIN_OBS_FOR_COV: u64 = 200;

impl VectorProposal {
    pub fn new(initial_sd: &[f64]) -> Self {
        let dim = initial_sd.len();
        VectorProposal {
            dim,
            log_scale: 0.0,
            chol: DMatrix::from_diagonal(&DVector::from_column_slice(initial_sd)),
            steps: 0,
            n_obs: 0,
            mean: DVector::zeros(dim),
            scatter: DMatrix::zeros(dim, dim),
            counter: AcceptCounter::default(),
        }
    }

    pub fn step<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim, |_, _| StandardNormal.sample(rng));
        (&self.chol * z) * self.log_scale.exp()
    }

    pub fn finish(&mut self, log_ratio: f64, accepted: bool, adapting: bool, counting: bool) {
        if adapting {
            self.steps += 1;
            let prob = if log_ratio.is_nan() { 0.0 } else { log_ratio.min(0.0).exp() };
            self.log_scale += (prob - VECTOR_TARGET) / (self.steps as f64).powf(GAIN_EXPONENT);
            self.log_scale = self.log_scale.clamp(-20.0, 5.0);
        }
        if counting {
            self.counter.record(accepted);
        }
    }

    /// Feeds the current state into the running covariance during adaptation.
    pub fn observe(&mut self, state: &[f64]) {
        self.n_obs += 1;
        let x = DVector::from_column_slice(state);
        let delta = &x - &self.mean;
        self.mean += &delta / self.n_obs as f64;
        let delta2 = &x - &self.mean;
        self.scatter += &delta * delta2.transpose();
        if self.n_obs >= MIN_OBS_FOR_COV && self.n_obs % REFRESH_EVERY == 0 {
            self.refresh();
        }
    }

    fn refresh(&mut self) {
        let mut cov = &self.scatter / (self.n_obs - 1) as f64;
        let jitter = 1e-10 + 1e-6 * cov.diagonal().max();
        for i in 0..self.dim {
            cov[(i, i)] += jitter;
        }
        if let Some(chol) = cov.cholesky() {
            let old_norm = self.chol.norm();
            let new = chol.l() * (2.38 / (self.dim as f64).sqrt());
            // carry the scale learned so far over to the new shape
            let new_norm = new.norm();
            if new_norm > 0.0 && old_norm > 0.0 && new_norm.is_finite() {
                self.log_scale += (old_norm / new_norm).ln();
                self.chol = new;
            }
        }
    }
}

/// Metropolis-Hastings accept step.
pub(crate) fn accept<R: Rng + ?Sized>(rng: &mut R, log_ratio: f64) -> bool {
    if log_ratio.is_nan() {
        return false;
    }
    if log_ratio >= 0.0 {
        return true;
    }
    let u: f64 = rng.random();
    u.ln() < log_ratio
}
