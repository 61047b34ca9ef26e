//! Shared generators and independent oracles for the integration tests.
#![allow(dead_code)]

use localiv::outcome::{ArmParams, OutcomeParams};
use localiv::selection::SelectionParams;
use localiv::{Dataset, OutcomeSpec, Unit};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// Ground truth of a synthetic draw from the full ordinal model.
pub struct OrdinalTruth {
    pub selection: SelectionParams,
    pub outcome: OutcomeParams,
    pub strata: Vec<f64>,
}

/// Simulates `n` units in `g` clusters from the ordinal local-IV model with
/// two covariates. Covariates are standardized in the sample so that the
/// generating coefficients are on the model's scale.
pub fn ordinal_dataset<R: Rng>(rng: &mut R, n: usize, g: usize, levels: usize) -> (Dataset, OrdinalTruth) {
    let p = 2;
    let mut x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| normal(rng)).collect()).collect();
    for j in 0..p {
        let m = x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let sd = (x.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        for r in &mut x {
            r[j] = (r[j] - m) / sd;
        }
    }
    let tau_s = 0.5;
    let selection = SelectionParams {
        intercept: 0.2,
        beta: vec![0.8, -0.5],
        sigma: 1.0,
        tau: tau_s,
        rand_effects: (0..g).map(|_| tau_s * normal(rng)).collect(),
    };
    let span = |lo: f64, hi: f64| (0..levels - 1).map(|k| lo + (hi - lo) * k as f64 / (levels - 2).max(1) as f64).collect::<Vec<_>>();
    let arm = |rng: &mut R, cuts: Vec<f64>, beta: Vec<f64>, gamma: f64| ArmParams {
        intercepts: cuts,
        beta,
        gamma,
        tau: 0.5,
        rand_effects: (0..g).map(|_| 0.5 * normal(rng)).collect(),
        residual_sd: None,
    };
    let a0 = arm(rng, span(-0.5, 1.0), vec![0.5, -0.3], 0.6);
    let a1 = arm(rng, span(-1.5, 0.2), vec![0.2, 0.4], -0.4);
    let outcome = OutcomeParams { family: OutcomeSpec::Ordinal { levels }, arms: [a0, a1] };

    let mut units = Vec::with_capacity(n);
    let mut strata = Vec::with_capacity(n);
    for (i, xi) in x.into_iter().enumerate() {
        let c = i % g;
        let s = selection.latent_mean(&xi, Some(c)) + selection.sigma * normal(rng);
        let z = 1.5 * normal(rng);
        let t = z >= s;
        let a = &outcome.arms[t as usize];
        let eta = a.eta(&xi, s, Some(c));
        let u: f64 = rng.random();
        let y = 1 + a.intercepts.iter().filter(|&&cut| u > logistic(cut + eta)).count();
        strata.push(s);
        units.push(Unit { outcome: y as f64, treated: t, iv: z, cluster: c, covariates: xi });
    }
    let ds = Dataset::new(units, g, OutcomeSpec::Ordinal { levels }, None, vec![]).unwrap();
    (ds, OrdinalTruth { selection, outcome, strata })
}

/// Solves `A x = b` by Gaussian elimination with full pivoting.
pub fn full_pivot_solve(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut b: Vec<Vec<f64>> = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (mut pr, mut pc, mut best) = (k, k, 0.0);
        for i in k..n {
            for j in k..n {
                if a[i][j].abs() > best {
                    best = a[i][j].abs();
                    pr = i;
                    pc = j;
                }
            }
        }
        assert!(best > 0.0, "singular system");
        a.swap(k, pr);
        b.swap(k, pr);
        for row in a.iter_mut() {
            row.swap(k, pc);
        }
        perm.swap(k, pc);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            for j in 0..m {
                b[i][j] -= f * b[k][j];
            }
        }
    }
    let mut x = vec![vec![0.0; m]; n];
    for k in (0..n).rev() {
        for j in 0..m {
            let s: f64 = (k + 1..n).map(|l| a[k][l] * x[l][j]).sum();
            x[k][j] = (b[k][j] - s) / a[k][k];
        }
    }
    let mut out = vec![vec![0.0; m]; n];
    for (k, &p) in perm.iter().enumerate() {
        out[p] = x[k].clone();
    }
    out
}

/// Least squares through the normal equations, solved with full pivoting.
/// Returns the coefficients and `(X'X)^{-1}`.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let k = x[0].len();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut rhs = vec![vec![0.0; k + 1]; k];
    for (row, &yi) in x.iter().zip(y) {
        for a in 0..k {
            for b in 0..k {
                xtx[a][b] += row[a] * row[b];
            }
            rhs[a][0] += row[a] * yi;
        }
    }
    for a in 0..k {
        rhs[a][a + 1] = 1.0;
    }
    let sol = full_pivot_solve(&xtx, &rhs);
    let beta = sol.iter().map(|r| r[0]).collect();
    let inv = sol.iter().map(|r| r[1..].to_vec()).collect();
    (beta, inv)
}

/// Cluster sandwich with the `G/(G-1) (N-1)/(N-k)` factor, by explicit loops.
pub fn sandwich(x: &[Vec<f64>], bread: &[Vec<f64>], resid: &[f64], clusters: &[usize]) -> Vec<Vec<f64>> {
    let k = x[0].len();
    let g_max = clusters.iter().max().unwrap() + 1;
    let mut scores = vec![vec![0.0; k]; g_max];
    for ((row, e), &c) in x.iter().zip(resid).zip(clusters) {
        for a in 0..k {
            scores[c][a] += row[a] * e;
        }
    }
    let mut used = clusters.to_vec();
    used.sort();
    used.dedup();
    let g = used.len() as f64;
    let n = x.len() as f64;
    let factor = g / (g - 1.0) * (n - 1.0) / (n - k as f64);
    let mut meat = vec![vec![0.0; k]; k];
    for s in &scores {
        for a in 0..k {
            for b in 0..k {
                meat[a][b] += s[a] * s[b];
            }
        }
    }
    let mul = |p: &[Vec<f64>], q: &[Vec<f64>]| -> Vec<Vec<f64>> {
        (0..k).map(|a| (0..k).map(|b| (0..k).map(|c| p[a][c] * q[c][b]).sum()).collect()).collect()
    };
    let v = mul(&mul(bread, &meat), bread);
    v.into_iter().map(|r| r.into_iter().map(|e| e * factor).collect()).collect()
}
