//! Orthonormal bases and projections onto their span.

use super::dense::{dot, norm, Matrix, Vector};
use super::error::{mismatch, LinalgError, Result};

/// Default relative drop tolerance for [`orthonormalize`].
pub const DEFAULT_DROP_TOL: f64 = 1e-10;

/// Maximum tolerated `|BᵀB - I|` entry for a valid basis.
pub const ORTHONORMALITY_TOL: f64 = 1e-10;

/// A `d x rank` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    columns: Matrix,
}

impl OrthonormalBasis {
    /// Wrap a matrix that is already orthonormal, checking the invariant.
    pub fn from_orthonormal(columns: Matrix) -> Result<Self> {
        if columns.cols() > columns.rows() {
            return Err(LinalgError::InvalidArgument(format!(
                "basis rank {} exceeds ambient dimension {}",
                columns.cols(),
                columns.rows()
            )));
        }
        let deviation = columns.gram().max_abs_diff(&Matrix::identity(columns.cols()));
        if deviation > ORTHONORMALITY_TOL {
            return Err(LinalgError::InvalidArgument(format!(
                "columns are not orthonormal (max |BᵀB - I| = {deviation:.3e})"
            )));
        }
        Ok(Self { columns })
    }

    pub fn ambient_dim(&self) -> usize {
        self.columns.rows()
    }

    pub fn rank(&self) -> usize {
        self.columns.cols()
    }

    pub fn columns(&self) -> &Matrix {
        &self.columns
    }

    pub fn into_matrix(self) -> Matrix {
        self.columns
    }

    /// Coordinates `Vᵀu`.
    pub fn coordinates(&self, u: &[f64]) -> Result<Vector> {
        self.columns.tr_matvec(u)
    }

    /// `V c` for coordinates `c`.
    pub fn combine(&self, coords: &[f64]) -> Result<Vector> {
        self.columns.matvec(coords)
    }

    /// Orthogonal projection `V Vᵀ u`.
    pub fn project(&self, u: &[f64]) -> Result<Vector> {
        if u.len() != self.ambient_dim() {
            return Err(mismatch("project", self.ambient_dim(), u.len()));
        }
        let c = self.coordinates(u)?;
        self.combine(&c)
    }

    /// Component of `u` orthogonal to the span, `u - V Vᵀ u`.
    pub fn complement(&self, u: &[f64]) -> Result<Vector> {
        let p = self.project(u)?;
        Ok(Vector::from_raw(u.iter().zip(p.iter()).map(|(a, b)| a - b).collect()))
    }

    /// Max entry of `|BᵀB - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        self.columns
            .gram()
            .max_abs_diff(&Matrix::identity(self.rank()))
    }
}

/// Orthonormal basis of the numerical column space of `columns`.
///
/// Modified Gram-Schmidt, left to right, with a second (re-orthogonalization)
/// sweep for every column. A column whose residual is at most
/// `drop_tol * max_column_norm` is treated as dependent and skipped. If the
/// second sweep still removes more than half of the residual, a third sweep is
/// applied before the column is judged.
pub fn orthonormalize(columns: &Matrix, drop_tol: f64) -> Result<OrthonormalBasis> {
    if !(drop_tol > 0.0 && drop_tol.is_finite()) {
        return Err(LinalgError::InvalidArgument(format!(
            "drop_tol must be positive, got {drop_tol}"
        )));
    }
    let d = columns.rows();
    let inputs = columns.columns();
    let max_norm = inputs.iter().map(|c| norm(c)).fold(0.0, f64::max);
    let threshold = drop_tol * max_norm;
    if max_norm <= f64::MIN_POSITIVE {
        return Err(LinalgError::AllColumnsNegligible);
    }

    let mut basis: Vec<Vec<f64>> = Vec::new();
    for mut v in inputs {
        if basis.len() == d {
            break;
        }
        let mut previous = norm(&v);
        for sweep in 0..3 {
            for q in &basis {
                let c = dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
            let current = norm(&v);
            let settled = current >= 0.5 * previous;
            previous = current;
            if sweep >= 1 && settled {
                break;
            }
        }
        let n = norm(&v);
        if n > threshold && n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
    }
    if basis.is_empty() {
        return Err(LinalgError::AllColumnsNegligible);
    }
    Ok(OrthonormalBasis {
        columns: Matrix::from_columns(&basis)?,
    })
}

/// `‖u - V Vᵀ u‖₂`, the distance from `u` to the span of `basis`.
pub fn projection_residual(basis: &OrthonormalBasis, u: &[f64]) -> Result<f64> {
    Ok(basis.complement(u)?.norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(d: usize, i: usize) -> Vec<f64> {
        Vector::unit(d, i).into_inner()
    }

    #[test]
    fn identity_is_its_own_basis() {
        let b = orthonormalize(&Matrix::identity(3), 1e-10).unwrap();
        assert_eq!(b.rank(), 3);
        assert!(b.columns().max_abs_diff(&Matrix::identity(3)) < 1e-15);
    }

    #[test]
    fn duplicate_direction_is_dropped() {
        let m = Matrix::from_columns(&[unit(3, 0), vec![2.0, 0.0, 0.0], unit(3, 1)]).unwrap();
        let b = orthonormalize(&m, 1e-10).unwrap();
        assert_eq!(b.rank(), 2);
        assert!(projection_residual(&b, &unit(3, 0)).unwrap() < 1e-15);
        assert!(projection_residual(&b, &unit(3, 1)).unwrap() < 1e-15);
        assert!((projection_residual(&b, &unit(3, 2)).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_dictionary_is_rejected() {
        assert_eq!(
            orthonormalize(&Matrix::zeros(4, 2), 1e-10),
            Err(LinalgError::AllColumnsNegligible)
        );
        assert!(orthonormalize(&Matrix::identity(2), 0.0).is_err());
    }

    #[test]
    fn residual_examples() {
        let b = orthonormalize(&Matrix::from_columns(&[unit(2, 0)]).unwrap(), 1e-10).unwrap();
        assert_eq!(projection_residual(&b, &unit(2, 0)).unwrap(), 0.0);
        assert_eq!(projection_residual(&b, &unit(2, 1)).unwrap(), 1.0);
        assert!(projection_residual(&b, &[1.0]).is_err());
    }

    #[test]
    fn rank_never_exceeds_ambient_dimension() {
        let m = Matrix::from_fn(3, 6, |i, j| ((i + 1) * (j + 2)) as f64 + (i * j * j) as f64);
        let b = orthonormalize(&m, 1e-10).unwrap();
        assert!(b.rank() <= 3);
        assert!(b.orthonormality_error() < 1e-12);
    }

    #[test]
    fn from_orthonormal_checks_invariant() {
        assert!(OrthonormalBasis::from_orthonormal(Matrix::identity(3)).is_ok());
        assert!(OrthonormalBasis::from_orthonormal(Matrix::identity(3).scaled(2.0)).is_err());
    }
}
