use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Draws from `N(Q^{-1} b, Q^{-1})` given a symmetric positive definite precision `Q`.
pub(crate) fn sample_gaussian_precision<R: Rng + ?Sized>(
    rng: &mut R,
    precision: DMatrix<f64>,
    linear: &DVector<f64>,
) -> Result<DVector<f64>> {
    let chol = precision.cholesky().ok_or_else(|| Error::params("posterior precision is not positive definite"))?;
    let mean = chol.solve(linear);
    let z = DVector::from_fn(linear.len(), |_, _| StandardNormal.sample(rng));
    // L^T v = z gives v ~ N(0, Q^{-1})
    let l = chol.l();
    let v = l.transpose().solve_upper_triangular(&z).expect("cholesky factor is nonsingular");
    Ok(mean + v)
}

/// Accumulates `W'W` and `W'y` for rows made of a dense part followed by a
/// single cluster indicator (one-hot of width `n_clusters`).
pub(crate) struct SparseNormalEquations {
    dense: usize,
    pub gram: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl SparseNormalEquations {
    pub fn new(dense: usize, n_clusters: usize) -> Self {
        let d = dense + n_clusters;
        SparseNormalEquations { dense, gram: DMatrix::zeros(d, d), rhs: DVector::zeros(d) }
    }

    pub fn add_row(&mut self, row: &[f64], cluster: usize, y: f64) {
        let m = self.dense;
        let c = m + cluster;
        for a in 0..m {
            let ra = row[a];
            for b in a..m {
                self.gram[(a, b)] += ra * row[b];
            }
            self.gram[(a, c)] += ra;
            self.rhs[a] += ra * y;
        }
        self.gram[(c, c)] += 1.0;
        self.rhs[c] += y;
    }

    /// Mirrors the upper triangle accumulated by [`add_row`](Self::add_row).
    pub fn symmetrize(&mut self) {
        let d = self.gram.nrows();
        for a in 0..d {
            for b in a + 1..d {
                self.gram[(b, a)] = self.gram[(a, b)];
            }
        }
    }
}
