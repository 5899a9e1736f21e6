//! Least squares, min-norm interpolation and spectral quantities.

use super::backend::{self, Cholesky};
use super::dense::{Matrix, Vector};
use super::error::{mismatch, LinalgError, Result};

/// Default relative singular-value cutoff for pseudoinverse solves.
pub const DEFAULT_RCOND: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-10;

/// Minimum-norm minimizer of `‖A w - b‖₂`.
///
/// Computed from the thin SVD of `A`; singular values below
/// `rcond * σ_max` are treated as zero.
pub fn least_squares(a: &Matrix, b: &[f64], rcond: f64) -> Result<Vector> {
    if a.rows() != b.len() {
        return Err(mismatch("least_squares", a.rows(), b.len()));
    }
    if !(rcond > 0.0 && rcond < 1.0) {
        return Err(LinalgError::InvalidArgument(format!(
            "rcond must lie in (0, 1), got {rcond}"
        )));
    }
    let svd = backend::thin_svd(a)?;
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let cutoff = rcond * smax;
    let utb = svd.u.tr_matvec(b)?;
    let coeffs: Vec<f64> = svd
        .s
        .iter()
        .zip(utb.iter())
        .map(|(&s, &c)| if s > cutoff && s > 0.0 { c / s } else { 0.0 })
        .collect();
    svd.v.matvec(&coeffs)
}

/// Ordinary least squares for a design with at least as many rows as
/// columns: Householder QR when the triangular factor is well conditioned,
/// otherwise the pseudoinverse solve of [`least_squares`].
pub fn ordinary_least_squares(x: &Matrix, y: &[f64]) -> Result<Vector> {
    if x.rows() != y.len() {
        return Err(mismatch("ordinary_least_squares", x.rows(), y.len()));
    }
    if x.rows() >= x.cols() && x.cols() > 0 {
        if let Some(w) = backend::qr_least_squares(x, y, 1.0 / DEFAULT_RCOND) {
            return Ok(Vector::from_raw(w));
        }
    }
    least_squares(x, y, DEFAULT_RCOND)
}

/// Interpolant of `X θ = y` closest to `theta0`:
/// `θ = θ₀ + Xᵀ (X Xᵀ)⁻¹ (y - X θ₀)`.
///
/// Requires `n <= d` and linearly independent rows. `X Xᵀ` is factored by
/// Cholesky; if that fails or the condition estimate is large, an
/// eigen-solve decides rank deficiency against `1 / rcond`.
pub fn min_norm_interpolant(x: &Matrix, y: &[f64], theta0: &[f64]) -> Result<Vector> {
    min_norm_interpolant_with(x, y, theta0, DEFAULT_RCOND)
}

pub fn min_norm_interpolant_with(x: &Matrix, y: &[f64], theta0: &[f64], rcond: f64) -> Result<Vector> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(mismatch("min_norm_interpolant (y)", n, y.len()));
    }
    if theta0.len() != d {
        return Err(mismatch("min_norm_interpolant (theta0)", d, theta0.len()));
    }
    if n > d {
        return Err(LinalgError::InvalidArgument(format!(
            "min-norm interpolation needs n <= d, got n = {n}, d = {d}"
        )));
    }
    let fitted = x.matvec(theta0)?;
    let residual: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let alpha = solve_row_gram(x, &residual, rcond)?;
    let step = x.tr_matvec(&alpha)?;
    Ok(Vector::from_raw(
        theta0.iter().zip(step.iter()).map(|(a, b)| a + b).collect(),
    ))
}

// Solves (X Xᵀ) α = r.
fn solve_row_gram(x: &Matrix, r: &[f64], rcond: f64) -> Result<Vec<f64>> {
    let limit = 1.0 / rcond;
    let gram = x.outer_gram();
    if let Some(chol) = Cholesky::new(&gram) {
        if chol.condition_estimate() < limit.sqrt() {
            let mut alpha = chol.solve(r);
            refine(&gram, &chol, r, &mut alpha);
            return Ok(alpha);
        }
    }
    let (values, vectors) = backend::symmetric_eigen(&gram)?;
    let lmax = values[0].max(0.0);
    let lmin = *values.last().unwrap();
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if !(condition < limit) {
        return Err(LinalgError::RankDeficientRows { condition, limit });
    }
    let coeffs = vectors.tr_matvec(r)?;
    let scaled: Vec<f64> = coeffs.iter().zip(&values).map(|(c, l)| c / l).collect();
    Ok(vectors.matvec(&scaled)?.into_inner())
}

// One step of iterative refinement.
fn refine(a: &Matrix, chol: &Cholesky, rhs: &[f64], x: &mut [f64]) {
    let Ok(ax) = a.matvec(x) else { return };
    let r: Vec<f64> = rhs.iter().zip(ax.iter()).map(|(b, v)| b - v).collect();
    let dx = chol.solve(&r);
    for (xi, di) in x.iter_mut().zip(dx) {
        *xi += di;
    }
}

fn check_symmetric(s: &Matrix) -> Result<()> {
    if !s.is_square() {
        return Err(LinalgError::NotSquare {
            rows: s.rows(),
            cols: s.cols(),
        });
    }
    let asym = s.max_asymmetry();
    if asym > SYMMETRY_TOL * s.max_abs().max(1.0) {
        return Err(LinalgError::NotSymmetric {
            max_asymmetry: asym,
        });
    }
    Ok(())
}

/// Eigenvalues of a symmetric PSD matrix, descending. Eigenvalues below
/// `-1e-10 λ_max` are an error; smaller negative round-off is clamped to 0.
pub fn spd_spectrum(s: &Matrix) -> Result<Vector> {
    check_symmetric(s)?;
    let mut vals = backend::symmetric_eigenvalues(s)?;
    let lmax = vals[0].max(0.0);
    let lmin = *vals.last().unwrap();
    if lmin < -1e-10 * lmax || (lmax == 0.0 && lmin < 0.0) {
        return Err(LinalgError::NotPsd { eigenvalue: lmin });
    }
    vals.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(Vector::from_raw(vals))
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn spectral_norm(s: &Matrix) -> Result<f64> {
    check_symmetric(s)?;
    let vals = backend::symmetric_eigenvalues(s)?;
    Ok(vals[0].abs().max(vals.last().unwrap().abs()))
}

/// Symmetric eigendecomposition: descending eigenvalues and the matching
/// orthonormal eigenvectors as columns.
pub fn symmetric_eigen(s: &Matrix) -> Result<(Vector, Matrix)> {
    check_symmetric(s)?;
    let (vals, vecs) = backend::symmetric_eigen(s)?;
    Ok((Vector::from_raw(vals), vecs))
}

/// Singular values, descending; `min(rows, cols)` of them.
pub fn singular_values(a: &Matrix) -> Result<Vector> {
    Ok(Vector::from_raw(backend::singular_values(a)?))
}

/// Eigenvalues `μ` of the pencil `A v = μ B v` for symmetric `A` and SPD `B`,
/// descending. Computed as the spectrum of `B^{-1/2} A B^{-1/2}`.
pub fn generalized_eigenvalues(a: &Matrix, b: &Matrix) -> Result<Vector> {
    check_symmetric(a)?;
    check_symmetric(b)?;
    if a.shape() != b.shape() {
        return Err(mismatch("generalized_eigenvalues", a.rows(), b.rows()));
    }
    let inv_sqrt = inverse_sqrt(b)?;
    let m = inv_sqrt.matmul(a)?.matmul(&inv_sqrt)?;
    let m = m.add(&m.transpose())?.scaled(0.5);
    Ok(Vector::from_raw(backend::symmetric_eigenvalues(&m)?))
}

/// `S^{1/2}` of a symmetric PSD matrix.
pub fn sqrt_psd(s: &Matrix) -> Result<Matrix> {
    spectral_function(s, |l| l.max(0.0).sqrt())
}

fn inverse_sqrt(s: &Matrix) -> Result<Matrix> {
    let (vals, _) = symmetric_eigen(s)?;
    let lmin = *vals.last().unwrap();
    if lmin <= 0.0 {
        return Err(LinalgError::NotPsd { eigenvalue: lmin });
    }
    spectral_function(s, |l| 1.0 / l.sqrt())
}

fn spectral_function(s: &Matrix, f: impl Fn(f64) -> f64) -> Result<Matrix> {
    let (vals, vecs) = symmetric_eigen(s)?;
    let scale: Vec<f64> = vals.iter().map(|&l| f(l)).collect();
    vecs.scale_columns(&scale).matmul_tr(&vecs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    #[test]
    fn least_squares_identity_and_mean() {
        let w = least_squares(&Matrix::identity(2), &[3.0, -1.0], DEFAULT_RCOND).unwrap();
        assert!(w.max_abs_diff(&Vector::new(v(&[3.0, -1.0])).unwrap()) < 1e-14);
        let a = Matrix::new(2, 1, v(&[1.0, 1.0])).unwrap();
        let w = least_squares(&a, &[1.0, 3.0], DEFAULT_RCOND).unwrap();
        assert!((w[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn least_squares_min_norm_for_rank_deficient() {
        // duplicated column: min-norm solution splits the weight evenly
        let a = Matrix::new(2, 2, v(&[1.0, 1.0, 2.0, 2.0])).unwrap();
        let w = least_squares(&a, &[2.0, 4.0], DEFAULT_RCOND).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-12 && (w[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn least_squares_validates() {
        assert!(matches!(
            least_squares(&Matrix::identity(2), &[1.0], DEFAULT_RCOND),
            Err(LinalgError::DimensionMismatch { .. })
        ));
        assert!(least_squares(&Matrix::identity(2), &[1.0, 1.0], 1.5).is_err());
    }

    #[test]
    fn interpolant_single_row_and_fixed_point() {
        let x = Matrix::new(1, 3, v(&[1.0, 0.0, 0.0])).unwrap();
        let t = min_norm_interpolant(&x, &[2.0], &[0.0; 3]).unwrap();
        assert_eq!(t.as_slice(), &[2.0, 0.0, 0.0]);
        let theta0 = [2.0, 5.0, -1.0];
        let t = min_norm_interpolant(&x, &[2.0], &theta0).unwrap();
        assert_eq!(t.as_slice(), &theta0);
    }

    #[test]
    fn interpolant_detects_dependent_rows() {
        let x = Matrix::new(2, 3, v(&[1.0, 2.0, 3.0, 2.0, 4.0, 6.0])).unwrap();
        assert!(matches!(
            min_norm_interpolant(&x, &[1.0, 2.0], &[0.0; 3]),
            Err(LinalgError::RankDeficientRows { .. })
        ));
        let tall = Matrix::identity(3);
        assert!(min_norm_interpolant(&tall.head_rows(3), &[1.0; 3], &[0.0; 3]).is_ok());
        let x = Matrix::new(3, 2, v(&[1.0, 0.0, 0.0, 1.0, 1.0, 1.0])).unwrap();
        assert!(min_norm_interpolant(&x, &[1.0; 3], &[0.0; 2]).is_err());
    }

    #[test]
    fn spectrum_examples() {
        let s = Matrix::from_diagonal(&[1.0, 4.0, 2.0]);
        assert_eq!(spd_spectrum(&s).unwrap().as_slice(), &[4.0, 2.0, 1.0]);
        let s = spd_spectrum(&Matrix::identity(5)).unwrap();
        assert!(s.iter().all(|&l| (l - 1.0).abs() < 1e-14));
        assert!(matches!(
            spd_spectrum(&Matrix::from_diagonal(&[1.0, -0.5])),
            Err(LinalgError::NotPsd { .. })
        ));
        let asym = Matrix::new(2, 2, v(&[1.0, 0.5, 0.0, 1.0])).unwrap();
        assert!(matches!(spd_spectrum(&asym), Err(LinalgError::NotSymmetric { .. })));
        // round-off negatives are clamped
        let s = Matrix::from_diagonal(&[1.0, -1e-14]);
        assert_eq!(spd_spectrum(&s).unwrap()[1], 0.0);
    }

    #[test]
    fn spectral_norm_examples() {
        assert_eq!(spectral_norm(&Matrix::from_diagonal(&[-2.0, 1.0])).unwrap(), 2.0);
        assert_eq!(spectral_norm(&Matrix::zeros(3, 3)).unwrap(), 0.0);
        let u = Matrix::new(3, 1, v(&[1.0, 2.0, 2.0])).unwrap();
        let vvt = u.matmul_tr(&u).unwrap();
        assert!((spectral_norm(&vvt).unwrap() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn generalized_pencil_scaling() {
        let b = Matrix::from_diagonal(&[2.0, 0.5, 1.0]);
        let a = b.scaled(3.0);
        let mu = generalized_eigenvalues(&a, &b).unwrap();
        assert!(mu.iter().all(|&m| (m - 3.0).abs() < 1e-12));
    }

    #[test]
    fn ols_overdetermined_exact() {
        let x = Matrix::new(3, 2, v(&[1.0, 0.0, 0.0, 1.0, 1.0, 1.0])).unwrap();
        let w = ordinary_least_squares(&x, &[1.0, 2.0, 3.0]).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-12 && (w[1] - 2.0).abs() < 1e-12);
    }
}
