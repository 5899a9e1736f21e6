//! Bridge to `faer` for the heavy kernels (gemm, symmetric eigensolver, SVD,
//! Cholesky). Everything runs sequentially; parallelism belongs to callers.

use faer::linalg::matmul::matmul;
use faer::linalg::solvers::{Solve, SolveLstsq};
use faer::{Accum, Mat, MatMut, MatRef, Par, Side};

use super::dense::Matrix;
use super::error::{LinalgError, Result};

fn view(m: &Matrix) -> MatRef<'_, f64> {
    MatRef::from_row_major_slice(m.as_slice(), m.rows(), m.cols())
}

fn to_matrix(m: MatRef<'_, f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// `op(a) * op(b)` where `op` optionally transposes.
pub(crate) fn gemm(a: &Matrix, ta: bool, b: &Matrix, tb: bool) -> Matrix {
    let lhs = if ta { view(a).transpose() } else { view(a) };
    let rhs = if tb { view(b).transpose() } else { view(b) };
    let (m, n) = (lhs.nrows(), rhs.ncols());
    let mut data = vec![0.0; m * n];
    {
        let dst = MatMut::from_row_major_slice_mut(&mut data, m, n);
        matmul(dst, Accum::Replace, lhs, rhs, 1.0, Par::Seq);
    }
    Matrix::from_raw(m, n, data)
}

/// Symmetric eigendecomposition, eigenvalues in descending order with the
/// matching eigenvectors as columns.
pub(crate) fn symmetric_eigen(s: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let evd = view(s)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| LinalgError::Decomposition(format!("{e:?}")))?;
    let n = s.rows();
    let vals = evd.S().column_vector();
    let vecs = evd.U();
    let values = (0..n).rev().map(|i| vals[i]).collect();
    let vectors = Matrix::from_fn(n, n, |i, j| vecs[(i, n - 1 - j)]);
    Ok((values, vectors))
}

/// Eigenvalues only, descending.
pub(crate) fn symmetric_eigenvalues(s: &Matrix) -> Result<Vec<f64>> {
    let mut vals = view(s)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| LinalgError::Decomposition(format!("{e:?}")))?;
    vals.reverse();
    Ok(vals)
}

/// Thin SVD `a = U diag(s) Vᵀ`, singular values descending.
pub(crate) struct ThinSvd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

pub(crate) fn thin_svd(a: &Matrix) -> Result<ThinSvd> {
    let svd = view(a)
        .thin_svd()
        .map_err(|e| LinalgError::Decomposition(format!("{e:?}")))?;
    let s = svd.S().column_vector();
    Ok(ThinSvd {
        u: to_matrix(svd.U()),
        s: (0..s.nrows()).map(|i| s[i]).collect(),
        v: to_matrix(svd.V()),
    })
}

pub(crate) fn singular_values(a: &Matrix) -> Result<Vec<f64>> {
    view(a)
        .singular_values()
        .map_err(|e| LinalgError::Decomposition(format!("{e:?}")))
}

/// Householder QR least squares for a matrix with at least as many rows as
/// columns. `None` when the ratio of extreme diagonal entries of `R`, a
/// lower bound on the condition number, reaches `limit`.
pub(crate) fn qr_least_squares(a: &Matrix, b: &[f64], limit: f64) -> Option<Vec<f64>> {
    let qr = view(a).qr();
    let r = qr.thin_R();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..r.ncols() {
        let d = r[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if !(lo > 0.0 && hi / lo < limit) {
        return None;
    }
    let rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
    let x = qr.solve_lstsq(&rhs);
    Some((0..a.cols()).map(|i| x[(i, 0)]).collect())
}

/// Cholesky factor of an SPD matrix; `None` when the factorization breaks down.
pub(crate) struct Cholesky {
    llt: faer::linalg::solvers::Llt<f64>,
}

impl Cholesky {
    pub fn new(s: &Matrix) -> Option<Self> {
        view(s).llt(Side::Lower).ok().map(|llt| Self { llt })
    }

    /// Squared ratio of extreme diagonal entries of the factor; a cheap lower
    /// bound on the 2-norm condition number.
    pub fn condition_estimate(&self) -> f64 {
        let l = self.llt.L();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..l.nrows() {
            let d = l[(i, i)].abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        (hi / lo).powi(2)
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let b = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = self.llt.solve(&b);
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }
}
