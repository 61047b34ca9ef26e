//! Scalar densities, link functions, quantiles and truncated-Normal sampling
//! shared by the model modules.

use std::f64::consts::{LN_2, PI, SQRT_2};

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::error::{Error, Result};

/// `ln(sqrt(2 pi))`.
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard Normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Log density of `N(mean, sd^2)` at `x`.
pub fn normal_log_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let u = (x - mean) / sd;
    -LN_SQRT_2PI - sd.ln() - 0.5 * u * u
}

/// Logistic sigmoid `1 / (1 + exp(-u))`, evaluated without overflow.
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(u))`.
pub fn log_sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        -(-u).exp().ln_1p()
    } else {
        u - u.exp().ln_1p()
    }
}

/// `ln(sigmoid(b) - sigmoid(a))` for `a <= b`.
///
/// Uses `sig(b) - sig(a) = sig(b) sig(-a) (1 - exp(a - b))`, which stays
/// accurate when both sigmoids are close to 0 or to 1.
pub fn log_sigmoid_diff(b: f64, a: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return log_sigmoid(b);
    }
    if b == f64::INFINITY {
        return log_sigmoid(-a);
    }
    if !(b > a) {
        return f64::NEG_INFINITY;
    }
    log_sigmoid(b) + log_sigmoid(-a) + log1mexp(b - a)
}

/// `ln(1 - exp(-d))` for `d > 0`.
fn log1mexp(d: f64) -> f64 {
    if d <= LN_2 {
        (-(-d).exp_m1()).ln()
    } else {
        (-(-d).exp()).ln_1p()
    }
}

/// Unnormalized log density of a half-Cauchy(0, `scale`) variable.
pub fn half_cauchy_log_density(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    let u = x / scale;
    -(u * u).ln_1p()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance; `0` for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

/// Empirical quantile by linear interpolation between the closest ranks
/// (`h = (n - 1) q`).
pub fn empirical_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("quantile of an empty vector"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::config(format!("quantile level {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, q))
}

/// Same rule as [`empirical_quantile`] on an already sorted, nonempty slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Draws `X ~ N(0, 1)` conditioned on `X > a`.
///
/// Naive rejection for `a < 0.45`, otherwise Robert's exponential proposal
/// with the optimal rate.
pub fn std_normal_above<R: Rng + ?Sized>(rng: &mut R, a: f64) -> f64 {
    if a < 0.45 {
        loop {
            let x: f64 = StandardNormal.sample(rng);
            if x > a {
                return x;
            }
        }
    }
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    let exp = Exp::new(rate).expect("positive rate");
    loop {
        let x = a + exp.sample(rng);
        let u: f64 = rng.random();
        let d = x - rate;
        if u.ln() <= -0.5 * d * d && x > a {
            return x;
        }
    }
}

/// Draws from `N(mean, sd^2)` restricted to `(lower, inf)`.
pub fn normal_above<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, lower: f64) -> f64 {
    mean + sd * std_normal_above(rng, (lower - mean) / sd)
}

/// Draws from `N(mean, sd^2)` restricted to `(-inf, upper]`.
pub fn normal_below<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, upper: f64) -> f64 {
    mean - sd * std_normal_above(rng, (mean - upper) / sd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quantile_examples() {
        assert_eq!(empirical_quantile(&[1.0, 2.0, 3.0], 0.5).unwrap(), 2.0);
        assert_eq!(empirical_quantile(&[1.0, 2.0, 3.0, 4.0], 0.0).unwrap(), 1.0);
        assert_eq!(empirical_quantile(&[10.0, 20.0], 0.25).unwrap(), 12.5);
        assert_eq!(empirical_quantile(&[3.0, 1.0, 2.0], 1.0).unwrap(), 3.0);
        assert!(empirical_quantile(&[], 0.5).is_err());
        assert!(empirical_quantile(&[1.0], 1.5).is_err());
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-12);
        assert_eq!(log_sigmoid(800.0), 0.0);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn log_sigmoid_diff_matches_direct_and_stays_finite() {
        let (b, a) = (3f64.ln(), -3f64.ln());
        assert!((log_sigmoid_diff(b, a) - 0.5f64.ln()).abs() < 1e-14);
        // far tails: direct subtraction would underflow to log(0)
        let v = log_sigmoid_diff(61.0, 60.0);
        assert!(v.is_finite());
        let expected = -60.0 + (1.0 - (-1f64).exp()).ln();
        assert!((v - expected).abs() < 1e-9, "{v} vs {expected}");
        assert_eq!(log_sigmoid_diff(1.0, 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn normal_cdf_reference_points() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.6448536269514722) - 0.95).abs() < 1e-15);
        assert!((normal_cdf(-1.959963984540054) - 0.025).abs() < 1e-15);
        assert_eq!(normal_cdf(f64::NEG_INFINITY), 0.0);
        assert_eq!(normal_cdf(f64::INFINITY), 1.0);
    }

    #[test]
    fn truncated_normal_draws_respect_bounds_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(mean, sd, bound) in &[(0.0, 1.0, -1.0), (0.0, 1.0, 2.5), (1.0, 2.0, 8.0)] {
            let n = 100_000;
            let draws: Vec<f64> = (0..n).map(|_| normal_above(&mut rng, mean, sd, bound)).collect();
            assert!(draws.iter().all(|&x| x > bound));
            let alpha = (bound - mean) / sd;
            let lambda = normal_pdf(alpha) / (1.0 - normal_cdf(alpha));
            let exact = mean + sd * lambda;
            let var = sd * sd * (1.0 + alpha * lambda - lambda * lambda);
            let se = (var / n as f64).sqrt();
            assert!((super::mean(&draws) - exact).abs() < 4.0 * se);

            let upper = -bound;
            let draws: Vec<f64> = (0..n).map(|_| normal_below(&mut rng, mean, sd, upper)).collect();
            assert!(draws.iter().all(|&x| x <= upper));
            let beta = (upper - mean) / sd;
            let lambda = normal_pdf(beta) / normal_cdf(beta);
            let exact = mean - sd * lambda;
            let var = sd * sd * (1.0 - beta * lambda - lambda * lambda);
            let se = (var / n as f64).sqrt();
            assert!((super::mean(&draws) - exact).abs() < 4.0 * se);
        }
    }

    #[test]
    fn half_cauchy_density_shape() {
        assert_eq!(half_cauchy_log_density(0.0, 25.0), 0.0);
        assert_eq!(half_cauchy_log_density(-1.0, 25.0), f64::NEG_INFINITY);
        assert!((half_cauchy_log_density(25.0, 25.0) + LN_2).abs() < 1e-15);
    }
}
