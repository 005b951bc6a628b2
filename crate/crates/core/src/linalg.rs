//! Dense SVD and the solvers built on it.
//!
//! nalgebra's bidiagonal SVD returns inaccurate factors for a few percent of
//! the structured matrices met here (clustered singular values), so the
//! decomposition is a one-sided Jacobi sweep instead.

use nalgebra::{DMatrix, DVector};

const MAX_SWEEPS: usize = 80;

/// `a = u diag(s) v^T` with `s` descending. `v` is square (`n x n`);
/// `u` is `m x n` and has zero columns where `s` vanishes.
pub(crate) struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub(crate) fn svd(a: &DMatrix<f64>) -> Svd {
    let (m, n) = a.shape();
    // pad with zero rows so the column sweep sees at least n rows
    let mut u = if m < n { a.clone().resize_vertically(n, 0.0) } else { a.clone() };
    let rows = u.nrows();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..rows {
                    let (x, y) = (u[(i, p)], u[(i, q)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let (x, y) = (u[(i, p)], u[(i, q)]);
                    u[(i, p)] = c * x - s * y;
                    u[(i, q)] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * x - s * y;
                    v[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|j| u.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));
    let mut us = DMatrix::zeros(m, n);
    let mut vs = DMatrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let sj = norms[j];
        s.push(sj);
        if sj > 0.0 {
            us.set_column(k, &(u.column(j).rows(0, m) / sj));
        }
        vs.set_column(k, &v.column(j));
    }
    Svd { u: us, s, v: vs }
}

impl Svd {
    /// Pseudo-inverse applied to `b`, dropping singular values `<= eps`.
    pub fn solve(&self, b: &DVector<f64>, eps: f64) -> DVector<f64> {
        let mut x = DVector::zeros(self.v.nrows());
        for (k, &sk) in self.s.iter().enumerate() {
            if sk > eps {
                let coeff = self.u.column(k).dot(b) / sk;
                x.axpy(coeff, &self.v.column(k), 1.0);
            }
        }
        x
    }

    /// Smallest over largest singular value, 0 for the zero matrix.
    pub fn ratio(&self) -> f64 {
        match (self.s.first(), self.s.last()) {
            (Some(&hi), Some(&lo)) if hi > 0.0 => lo / hi,
            _ => 0.0,
        }
    }
}

/// Orthonormal basis (as columns) of the `dim`-dimensional subspace
/// that `m` maps closest to zero.
pub(crate) fn nullspace(m: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    let v = svd(m).v;
    let n = v.ncols();
    v.columns(n - dim, dim).into_owned()
}

/// Minimum-norm least-squares solution of `a x = b`.
pub(crate) fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let d = svd(a);
    let smax = d.s.first().copied().unwrap_or(0.0);
    d.solve(b, smax * 1e-13 * (a.nrows().max(a.ncols()) as f64))
}
