use crate::error::{Error, Result};
use crate::stats::{mean, sample_variance};

/// Convergence threshold on the potential scale reduction factor.
pub const RHAT_THRESHOLD: f64 = 1.1;

/// Classical Gelman-Rubin potential scale reduction factor.
///
/// With `m` chains of `n` draws, `B = n var(chain means)`, `W = mean(chain variances)`,
/// `V = (n - 1)/n W + B/n` and `R = sqrt(V / W)`. Chains are truncated to the
/// shortest one. Returns `NaN` when `W = 0`.
pub fn gelman_rubin(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::config("Gelman-Rubin needs at least 2 chains"));
    }
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n < 2 {
        return Err(Error::config("Gelman-Rubin needs at least 2 draws per chain"));
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(&c[..n])).collect();
    let within = mean(&chains.iter().map(|c| sample_variance(&c[..n])).collect::<Vec<_>>());
    if within == 0.0 {
        return Ok(f64::NAN);
    }
    let nf = n as f64;
    let between = nf * sample_variance(&means);
    let pooled = (nf - 1.0) / nf * within + between / nf;
    Ok((pooled / within).sqrt())
}

/// Acceptance rate of one Metropolis block in one chain, over post-burn-in iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockAcceptance {
    pub chain: usize,
    pub block: String,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// `(parameter name, R-hat)`; empty with a single chain.
    pub rhat: Vec<(String, f64)>,
    pub acceptance: Vec<BlockAcceptance>,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    pub fn max_rhat(&self) -> Option<f64> {
        self.rhat.iter().map(|(_, r)| *r).filter(|r| !r.is_nan()).reduce(f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn identical_chains() {
        let c = vec![1.0, 2.0, 3.0];
        let r = gelman_rubin(&[c.clone(), c]).unwrap();
        assert!((r - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_chains_are_undefined() {
        assert!(gelman_rubin(&[vec![2.0; 4], vec![2.0; 4]]).unwrap().is_nan());
    }

    #[test]
    fn needs_two_chains_of_two() {
        assert!(gelman_rubin(&[vec![1.0, 2.0]]).is_err());
        assert!(gelman_rubin(&[vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn independent_normal_chains_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let chains: Vec<Vec<f64>> =
            (0..3).map(|_| (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let r = gelman_rubin(&chains).unwrap();
        assert!((0.99..=1.01).contains(&r), "{r}");
    }

    #[test]
    fn separated_chains_flagged() {
        let a: Vec<f64> = (0..100).map(|i| (i % 7) as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 10.0).collect();
        assert!(gelman_rubin(&[a, b]).unwrap() > RHAT_THRESHOLD);
    }
}
