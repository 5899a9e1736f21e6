//! Covariance recipes: an eigenvalue law plus a rotation.

use serde::{Deserialize, Serialize};

use super::seed::{normal_matrix, stream_rng};
use super::SynthError;
use crate::matrixkit::{orthonormalize, Matrix, DEFAULT_DROP_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EigenLaw {
    /// `λ_j = exp(-j / tau) + floor` for `j = 1..=d`.
    ExponentialDecay { tau: f64, floor: f64 },
    Explicit { eigs: Vec<f64> },
    Isotropic { scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Rotation {
    Identity,
    /// Haar-distributed orthogonal eigenbasis drawn from `seed`.
    SeededOrthogonal { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceSpec {
    pub dim: usize,
    pub law: EigenLaw,
    pub rotation: Rotation,
}

impl CovarianceSpec {
    pub fn new(dim: usize, law: EigenLaw, rotation: Rotation) -> Result<Self, SynthError> {
        let spec = Self { dim, law, rotation };
        spec.validate()?;
        Ok(spec)
    }

    pub fn isotropic(dim: usize, scale: f64) -> Result<Self, SynthError> {
        Self::new(dim, EigenLaw::Isotropic { scale }, Rotation::Identity)
    }

    pub fn exponential_decay(dim: usize, tau: f64, floor: f64) -> Result<Self, SynthError> {
        Self::new(dim, EigenLaw::ExponentialDecay { tau, floor }, Rotation::Identity)
    }

    pub fn explicit(eigs: Vec<f64>) -> Result<Self, SynthError> {
        Self::new(eigs.len(), EigenLaw::Explicit { eigs }, Rotation::Identity)
    }

    pub fn with_rotation(mut self, rotation: Rotation) -> Self {
        self.rotation = rotation;
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InvalidCovariance(msg));
        if self.dim == 0 {
            return bad("dimension must be at least 1".into());
        }
        match &self.law {
            EigenLaw::ExponentialDecay { tau, floor } => {
                if !(*tau > 0.0 && tau.is_finite()) {
                    return bad(format!("tau must be positive, got {tau}"));
                }
                if !(*floor >= 0.0 && floor.is_finite()) {
                    return bad(format!("floor must be non-negative, got {floor}"));
                }
                let smallest = (-(self.dim as f64) / tau).exp() + floor;
                if smallest <= 0.0 {
                    return bad(format!(
                        "exp(-{}/{tau}) underflows; use a positive floor",
                        self.dim
                    ));
                }
            }
            EigenLaw::Explicit { eigs } => {
                if eigs.len() != self.dim {
                    return bad(format!("{} eigenvalues for dimension {}", eigs.len(), self.dim));
                }
                if let Some(e) = eigs.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
                    return bad(format!("eigenvalues must be positive and finite, got {e}"));
                }
            }
            EigenLaw::Isotropic { scale } => {
                if !(*scale > 0.0 && scale.is_finite()) {
                    return bad(format!("scale must be positive, got {scale}"));
                }
            }
        }
        Ok(())
    }

    /// The prescribed spectrum, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let d = self.dim;
        let mut eigs = match &self.law {
            EigenLaw::ExponentialDecay { tau, floor } => (1..=d)
                .map(|j| (-(j as f64) / tau).exp() + floor)
                .collect(),
            EigenLaw::Explicit { eigs } => eigs.clone(),
            EigenLaw::Isotropic { scale } => vec![*scale; d],
        };
        eigs.sort_by(|a, b| b.total_cmp(a));
        eigs
    }

    pub fn realize(&self) -> Result<RealizedCovariance, SynthError> {
        self.validate()?;
        let eigenvalues = self.eigenvalues();
        let basis = match self.rotation {
            Rotation::Identity => None,
            Rotation::SeededOrthogonal { seed } => Some(haar_orthogonal(self.dim, seed)?),
        };
        Ok(RealizedCovariance { eigenvalues, basis })
    }
}

fn haar_orthogonal(d: usize, seed: u64) -> Result<Matrix, SynthError> {
    let g = normal_matrix(&mut stream_rng(seed, 0), d, d);
    let q = orthonormalize(&g, DEFAULT_DROP_TOL)?;
    if q.rank() != d {
        return Err(SynthError::InvalidCovariance(format!(
            "rotation draw for seed {seed} was rank deficient"
        )));
    }
    Ok(q.into_matrix())
}

/// `Σ = Q diag(λ) Qᵀ` with the factors kept, so products with `Σ` and
/// `Σ^{1/2}` avoid forming dense matrices when `Q = I`.
#[derive(Debug, Clone)]
pub struct RealizedCovariance {
    eigenvalues: Vec<f64>,
    basis: Option<Matrix>,
}

impl RealizedCovariance {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn is_diagonal(&self) -> bool {
        self.basis.is_none()
    }

    pub fn matrix(&self) -> Matrix {
        self.spectral_matrix(|l| l)
    }

    /// Symmetric square root `Q diag(√λ) Qᵀ`.
    pub fn sqrt(&self) -> Matrix {
        self.spectral_matrix(f64::sqrt)
    }

    fn spectral_matrix(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let vals: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        match &self.basis {
            None => Matrix::from_diagonal(&vals),
            Some(q) => {
                let s = q
                    .scale_columns(&vals)
                    .matmul_tr(q)
                    .expect("square factors");
                Matrix::from_fn(s.rows(), s.cols(), |i, j| 0.5 * (s[(i, j)] + s[(j, i)]))
            }
        }
    }

    /// `vᵀ Σ v`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        assert_eq!(v.len(), self.dim(), "quadratic_form dimension");
        match &self.basis {
            None => self.eigenvalues.iter().zip(v).map(|(l, x)| l * x * x).sum(),
            Some(q) => {
                let c = q.tr_matvec(v).expect("checked dimension");
                self.eigenvalues.iter().zip(c.iter()).map(|(l, x)| l * x * x).sum()
            }
        }
    }

    /// Maps standard-normal rows `Z` to rows with covariance `Σ`: `Z Σ^{1/2}`.
    pub fn color_rows(&self, z: &Matrix) -> Matrix {
        match &self.basis {
            None => {
                let roots: Vec<f64> = self.eigenvalues.iter().map(|l| l.sqrt()).collect();
                z.scale_columns(&roots)
            }
            Some(_) => z.matmul(&self.sqrt()).expect("checked dimension"),
        }
    }
}

/// The dense `d x d` covariance described by `spec`.
pub fn realize_covariance(spec: &CovarianceSpec) -> Result<Matrix, SynthError> {
    Ok(spec.realize()?.matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixkit::spd_spectrum;

    #[test]
    fn isotropic_unit_is_identity() {
        let s = realize_covariance(&CovarianceSpec::isotropic(3, 1.0).unwrap()).unwrap();
        assert_eq!(s, Matrix::identity(3));
    }

    #[test]
    fn exponential_decay_diagonal() {
        let s = realize_covariance(&CovarianceSpec::exponential_decay(2, 1.0, 1e-4).unwrap())
            .unwrap();
        let e = std::f64::consts::E;
        assert!((s[(0, 0)] - (1.0 / e + 1e-4)).abs() < 1e-15);
        assert!((s[(1, 1)] - (1.0 / (e * e) + 1e-4)).abs() < 1e-15);
        assert_eq!(s[(0, 1)], 0.0);
    }

    #[test]
    fn rotated_explicit_keeps_spectrum() {
        let spec = CovarianceSpec::explicit(vec![4.0, 1.0])
            .unwrap()
            .with_rotation(Rotation::SeededOrthogonal { seed: 7 });
        let s = realize_covariance(&spec).unwrap();
        assert!(s[(0, 1)].abs() > 1e-6, "rotation should mix coordinates");
        let eig = spd_spectrum(&s).unwrap();
        assert!((eig[0] - 4.0).abs() < 1e-12 && (eig[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sqrt_squares_back_and_quadratic_form_agrees() {
        let spec = CovarianceSpec::exponential_decay(5, 2.0, 0.01)
            .unwrap()
            .with_rotation(Rotation::SeededOrthogonal { seed: 1 });
        let r = spec.realize().unwrap();
        let root = r.sqrt();
        assert!(root.matmul(&root).unwrap().max_abs_diff(&r.matrix()) < 1e-12);
        let v = [1.0, -2.0, 0.5, 0.0, 3.0];
        let direct = r.matrix().matvec(&v).unwrap().as_slice().iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        assert!((r.quadratic_form(&v) - direct).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(CovarianceSpec::isotropic(0, 1.0).is_err());
        assert!(CovarianceSpec::exponential_decay(3, 0.0, 0.0).is_err());
        assert!(CovarianceSpec::exponential_decay(2000, 1.0, 0.0).is_err());
        assert!(CovarianceSpec::explicit(vec![1.0, -1.0]).is_err());
        assert!(CovarianceSpec::new(3, EigenLaw::Explicit { eigs: vec![1.0] }, Rotation::Identity).is_err());
    }
}
