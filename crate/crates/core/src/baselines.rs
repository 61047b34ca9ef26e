//! Regression adjustment and two-stage least squares with cluster-robust covariance.
//!
//! Ordinal outcomes enter as their integer scores. Covariates are used on
//! their original scale.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::stats::normal_cdf;

const RANK_TOL: f64 = 1e-10;
const WEAK_IV_T: f64 = 1e-6;
const Z_975: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub coefficients: Vec<f64>,
    pub names: Vec<String>,
    /// Cluster-robust covariance of the coefficients.
    pub vcov: DMatrix<f64>,
    /// Index of the coefficient that estimates the ATT.
    pub target_coef_index: usize,
    pub n: usize,
    pub n_clusters: usize,
    pub residuals: Vec<f64>,
    /// Cluster-robust Wald F of the excluded instrument in the first stage (2SLS only).
    pub first_stage_f: Option<f64>,
}

impl RegressionFit {
    pub fn estimate(&self) -> f64 {
        self.coefficients[self.target_coef_index]
    }

    pub fn std_error(&self) -> f64 {
        let i = self.target_coef_index;
        self.vcov[(i, i)].max(0.0).sqrt()
    }

    /// Normal-approximation 95% interval for the target coefficient.
    pub fn ci95(&self) -> (f64, f64) {
        let (b, se) = (self.estimate(), self.std_error());
        (b - Z_975 * se, b + Z_975 * se)
    }

    /// Two-sided Normal p-value for the target coefficient.
    pub fn p_value(&self) -> f64 {
        2.0 * normal_cdf(-(self.estimate() / self.std_error()).abs())
    }
}

/// Least squares by Householder QR. Returns the coefficients and `(X'X)^{-1}`.
fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (n, k) = x.shape();
    if n <= k {
        return Err(Error::InvalidDataset(format!("{n} observations for {k} regressors")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..k).map(|j| x.column(j).norm()).fold(0.0, f64::max);
    if (0..k).any(|j| r[(j, j)].abs() <= RANK_TOL * scale.max(1.0)) {
        return Err(Error::RankDeficient);
    }
    let qty = qr.q().transpose() * y;
    let beta = r.solve_upper_triangular(&qty).ok_or(Error::RankDeficient)?;
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(k, k)).ok_or(Error::RankDeficient)?;
    let xtx_inv = &r_inv * r_inv.transpose();
    Ok((beta, xtx_inv))
}

/// Cluster-robust sandwich `B M B` with bread `B = (X'X)^{-1}`, meat
/// `M = sum_g (X_g'e_g)(X_g'e_g)'` and factor `G/(G-1) (N-1)/(N-k)`.
/// `G` counts the distinct cluster labels present.
pub fn cluster_robust_vcov(design: &DMatrix<f64>, residuals: &[f64], clusters: &[usize]) -> Result<DMatrix<f64>> {
    let (n, _) = design.shape();
    if residuals.len() != n || clusters.len() != n {
        return Err(Error::InvalidDataset("design, residuals and clusters differ in length".into()));
    }
    let (_, bread) = least_squares(design, &DVector::zeros(n))?;
    sandwich(design, &bread, residuals, clusters)
}

fn sandwich(design: &DMatrix<f64>, bread: &DMatrix<f64>, residuals: &[f64], clusters: &[usize]) -> Result<DMatrix<f64>> {
    let (n, k) = design.shape();
    let mut labels: Vec<usize> = clusters.to_vec();
    labels.sort_unstable();
    labels.dedup();
    let g = labels.len();
    if g < 2 {
        return Err(Error::InvalidDataset("cluster-robust covariance needs at least 2 clusters".into()));
    }
    let mut scores = vec![DVector::<f64>::zeros(k); g];
    for i in 0..n {
        let slot = labels.binary_search(&clusters[i]).expect("label present");
        scores[slot].axpy(residuals[i], &design.row(i).transpose(), 1.0);
    }
    let mut meat = DMatrix::<f64>::zeros(k, k);
    for s in &scores {
        meat.ger(1.0, s, s, 1.0);
    }
    let factor = g as f64 / (g - 1) as f64 * (n - 1) as f64 / (n - k) as f64;
    let v = bread * meat * bread * factor;
    Ok((&v + v.transpose()) * 0.5)
}

fn covariate_columns(dataset: &Dataset) -> Vec<Vec<f64>> {
    let p = dataset.n_covariates();
    (0..p).map(|j| dataset.units.iter().map(|u| u.covariates[j]).collect()).collect()
}

fn clusters(dataset: &Dataset) -> Vec<usize> {
    dataset.units.iter().map(|u| u.cluster).collect()
}

fn outcomes(dataset: &Dataset) -> DVector<f64> {
    DVector::from_iterator(dataset.len(), dataset.units.iter().map(|u| u.outcome))
}

fn treatment(dataset: &Dataset) -> Vec<f64> {
    dataset.units.iter().map(|u| if u.treated { 1.0 } else { 0.0 }).collect()
}

/// Regression of Y on `(1, T, Xc, T Xc)`, covariates centered at their
/// overall means. The ATT estimate is the coefficient on `T`.
pub fn ols_att(dataset: &Dataset) -> Result<RegressionFit> {
    let n = dataset.len();
    let t = treatment(dataset);
    let centered: Vec<Vec<f64>> = covariate_columns(dataset)
        .into_iter()
        .map(|c| {
            let m = c.iter().sum::<f64>() / n as f64;
            c.into_iter().map(|v| v - m).collect()
        })
        .collect();
    let mut names = vec!["intercept".to_string(), "treated".to_string()];
    names.extend(dataset.covariate_names.iter().map(|c| format!("{c}_centered")));
    names.extend(dataset.covariate_names.iter().map(|c| format!("treated:{c}_centered")));
    let k = names.len();
    let x = DMatrix::from_fn(n, k, |i, j| match j {
        0 => 1.0,
        1 => t[i],
        j if j < 2 + centered.len() => centered[j - 2][i],
        j => t[i] * centered[j - 2 - centered.len()][i],
    });
    let y = outcomes(dataset);
    let (beta, bread) = least_squares(&x, &y)?;
    let resid: Vec<f64> = (&y - &x * &beta).iter().copied().collect();
    let cl = clusters(dataset);
    let vcov = sandwich(&x, &bread, &resid, &cl)?;
    Ok(RegressionFit {
        coefficients: beta.iter().copied().collect(),
        names,
        vcov,
        target_coef_index: 1,
        n,
        n_clusters: distinct(&cl),
        residuals: resid,
        first_stage_f: None,
    })
}

fn distinct(labels: &[usize]) -> usize {
    let mut l = labels.to_vec();
    l.sort_unstable();
    l.dedup();
    l.len()
}

/// Two-stage least squares with the IV as the excluded instrument.
///
/// Stage 1 regresses T on `(1, X, Z)`; stage 2 regresses Y on `(1, X, T_hat)`.
/// The covariance uses structural residuals `y - (1, X, T) b`.
pub fn tsls_att(dataset: &Dataset) -> Result<RegressionFit> {
    let n = dataset.len();
    let p = dataset.n_covariates();
    let cols = covariate_columns(dataset);
    let t = treatment(dataset);
    let cl = clusters(dataset);
    let exog = |i: usize, j: usize| if j == 0 { 1.0 } else { cols[j - 1][i] };

    let x1 = DMatrix::from_fn(n, p + 2, |i, j| if j <= p { exog(i, j) } else { dataset.units[i].iv });
    let tv = DVector::from_vec(t.clone());
    let (pi, bread1) = least_squares(&x1, &tv)?;
    let resid1: Vec<f64> = (&tv - &x1 * &pi).iter().copied().collect();
    let v1 = sandwich(&x1, &bread1, &resid1, &cl)?;
    let t_stat = pi[p + 1] / v1[(p + 1, p + 1)].sqrt();
    if !(t_stat.abs() >= WEAK_IV_T) {
        return Err(Error::WeakInstrument { t_stat });
    }
    let t_hat = &x1 * &pi;

    let x2 = DMatrix::from_fn(n, p + 2, |i, j| if j <= p { exog(i, j) } else { t_hat[i] });
    let y = outcomes(dataset);
    let (beta, bread2) = least_squares(&x2, &y)?;
    let structural = DMatrix::from_fn(n, p + 2, |i, j| if j <= p { exog(i, j) } else { t[i] });
    let resid: Vec<f64> = (&y - &structural * &beta).iter().copied().collect();
    let vcov = sandwich(&x2, &bread2, &resid, &cl)?;

    let mut names = vec!["intercept".to_string()];
    names.extend(dataset.covariate_names.iter().cloned());
    names.push("treated".into());
    Ok(RegressionFit {
        coefficients: beta.iter().copied().collect(),
        names,
        vcov,
        target_coef_index: p + 1,
        n,
        n_clusters: distinct(&cl),
        residuals: resid,
        first_stage_f: Some(t_stat * t_stat),
    })
}
