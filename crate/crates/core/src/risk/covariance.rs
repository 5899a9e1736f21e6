//! Empirical covariance concentration and the structural assumptions on
//! source and target covariances.

use serde::{Deserialize, Serialize};

use super::RiskError;
use crate::matrixkit::{generalized_eigenvalues, singular_values, spectral_norm, Matrix, OrthonormalBasis};

fn empirical_second_moment(x: &Matrix) -> Matrix {
    x.gram().scaled(1.0 / x.rows() as f64)
}

fn check_dims(sigma: &Matrix, x: &Matrix) -> Result<(), RiskError> {
    if !sigma.is_square() || sigma.rows() != x.cols() {
        return Err(RiskError::InvalidArgument(format!(
            "covariance is {}x{}, samples have {} features",
            sigma.rows(),
            sigma.cols(),
            x.cols()
        )));
    }
    Ok(())
}

/// `‖Σ − XᵀX/n‖₂`.
pub fn covariance_estimation_error(sigma: &Matrix, x: &Matrix) -> Result<f64, RiskError> {
    check_dims(sigma, x)?;
    Ok(spectral_norm(&sigma.sub(&empirical_second_moment(x))?)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub holds: bool,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

/// Whether `lo Σ ⪯ XᵀX/n ⪯ hi Σ`, judged by the extreme generalized
/// eigenvalues of the pair `(XᵀX/n, Σ)`.
pub fn check_covariance_sandwich(sigma: &Matrix, x: &Matrix, lo: f64, hi: f64) -> Result<SandwichReport, RiskError> {
    check_dims(sigma, x)?;
    sandwich(&empirical_second_moment(x), sigma, lo, hi)
}

/// The same sandwich seen through a fixed basis `B`: compares
/// `BᵀXᵀXB/n` with `BᵀΣB`.
pub fn check_projected_sandwich(
    sigma: &Matrix,
    x: &Matrix,
    basis: &OrthonormalBasis,
    lo: f64,
    hi: f64,
) -> Result<SandwichReport, RiskError> {
    check_dims(sigma, x)?;
    let b = basis.columns();
    let xb = x.matmul(b)?;
    let empirical = empirical_second_moment(&xb);
    let population = b.tr_matmul(&sigma.matmul(b)?)?;
    let population = population.add(&population.transpose())?.scaled(0.5);
    sandwich(&empirical, &population, lo, hi)
}

fn sandwich(empirical: &Matrix, population: &Matrix, lo: f64, hi: f64) -> Result<SandwichReport, RiskError> {
    if !(lo <= hi) {
        return Err(RiskError::InvalidArgument(format!("empty band [{lo}, {hi}]")));
    }
    let mu = generalized_eigenvalues(empirical, population)?;
    let max_eigenvalue = mu[0];
    let min_eigenvalue = mu[mu.dim() - 1];
    Ok(SandwichReport {
        holds: lo <= min_eigenvalue && max_eigenvalue <= hi,
        min_eigenvalue,
        max_eigenvalue,
    })
}

/// Largest `r` with `Σᵢ ⪰ r Σ_T` for every source covariance.
pub fn covariance_dominance(sigmas: &[Matrix], sigma_t: &Matrix) -> Result<f64, RiskError> {
    if sigmas.is_empty() {
        return Err(RiskError::InvalidArgument("no source covariances".into()));
    }
    let mut r = f64::INFINITY;
    for s in sigmas {
        let mu = generalized_eigenvalues(s, sigma_t)?;
        r = r.min(mu[mu.dim() - 1]);
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    /// `l`-th largest singular value of the `l x m` head matrix.
    pub sigma_l: f64,
    /// `√(m / l)`.
    pub reference: f64,
}

pub fn diversity_sigma_l(wtilde: &Matrix) -> Result<DiversityReport, RiskError> {
    let (l, m) = wtilde.shape();
    let sv = singular_values(wtilde)?;
    let sigma_l = if m < l { 0.0 } else { sv[l - 1] };
    Ok(DiversityReport {
        sigma_l,
        reference: (m as f64 / l as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimation_error_examples() {
        let sigma = Matrix::from_diagonal(&[3.0, 1.0]);
        assert!((covariance_estimation_error(&sigma, &Matrix::zeros(4, 2)).unwrap() - 3.0).abs() < 1e-14);
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap().scaled(2f64.sqrt());
        assert!(covariance_estimation_error(&Matrix::identity(2), &x).unwrap() < 1e-14);
    }

    #[test]
    fn exact_moment_matches_band() {
        // XᵀX/n = I exactly; the band only allows for eigensolver round-off
        let x = Matrix::vstack(&[&Matrix::identity(3).scaled(2.0), &Matrix::zeros(1, 3)]).unwrap();
        let rep = check_covariance_sandwich(&Matrix::identity(3), &x, 1.0 - 1e-12, 1.0 + 1e-12).unwrap();
        assert!(rep.holds);
        let doubled = check_covariance_sandwich(&Matrix::identity(3), &x.scaled(2.0), 0.9, 1.1).unwrap();
        assert!(!doubled.holds);
        assert!((doubled.min_eigenvalue - 4.0).abs() < 1e-12);
    }

    #[test]
    fn dominance_examples() {
        let st = Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        assert!((covariance_dominance(&[st.clone()], &st).unwrap() - 1.0).abs() < 1e-12);
        assert!((covariance_dominance(&[st.scaled(3.0), st.scaled(5.0)], &st).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn diversity_examples() {
        let l = 3;
        let w = Matrix::hstack(&[&Matrix::identity(l), &Matrix::identity(l)]).unwrap();
        let rep = diversity_sigma_l(&w).unwrap();
        assert!((rep.sigma_l - 2f64.sqrt()).abs() < 1e-14);
        assert!((rep.reference - 2f64.sqrt()).abs() < 1e-15);
        let deficient = Matrix::from_rows(&[vec![1.0, 1.0, 1.0], vec![2.0, 2.0, 2.0]]).unwrap();
        assert!(diversity_sigma_l(&deficient).unwrap().sigma_l < 1e-14);
    }
}
