//! Risk evaluation and theory-side diagnostics.

mod bounds;
mod covariance;
mod ranks;

use thiserror::Error;

use crate::matrixkit::{LinalgError, Matrix, Vector};
use crate::synth::Dataset;

pub use bounds::{
    theorem1_bound, theorem2_bound, BoundComponents, BoundInputs, BoundReport, CONSTANTS_NOTE,
    DEFAULT_DELTA,
};
pub use covariance::{
    check_covariance_sandwich, check_projected_sandwich, covariance_dominance,
    covariance_estimation_error, diversity_sigma_l, DiversityReport, SandwichReport,
};
pub use ranks::{effective_ranks, EffectiveRankReport, DEFAULT_B};

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Denominators below this make [`error_ratio`] return `+∞`.
pub const RATIO_FLOOR: f64 = 1e-30;

/// `(θ̂ − θ*)ᵀ Σ (θ̂ − θ*)`.
pub fn excess_risk(theta_hat: &Vector, theta_star: &Vector, sigma: &Matrix) -> Result<f64, RiskError> {
    let diff = theta_hat.sub(theta_star)?;
    let sd = sigma.matvec(&diff)?;
    Ok(diff.dot(&sd).max(0.0))
}

/// Mean squared prediction error of `theta` on `data`.
pub fn mse(theta: &Vector, data: &Dataset) -> Result<f64, RiskError> {
    let fit = data.x().matvec(theta)?;
    Ok(fit.sub(data.y())?.norm_squared() / data.n() as f64)
}

/// `MSE(θ̂; test) / MSE(θ*; test)`; `+∞` when the reference error is
/// numerically zero.
pub fn error_ratio(theta_hat: &Vector, theta_star: &Vector, test: &Dataset) -> Result<f64, RiskError> {
    let denom = mse(theta_star, test)?;
    if denom < RATIO_FLOOR {
        return Ok(f64::INFINITY);
    }
    Ok(mse(theta_hat, test)? / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{sample_gaussian_dataset, CovarianceSpec};

    #[test]
    fn excess_risk_examples() {
        let t = Vector::new(vec![1.0, 2.0]).unwrap();
        assert_eq!(excess_risk(&t, &t, &Matrix::identity(2)).unwrap(), 0.0);
        let h = Vector::new(vec![4.0, 6.0]).unwrap();
        assert_eq!(excess_risk(&h, &t, &Matrix::identity(2)).unwrap(), 25.0);
        assert!(excess_risk(&h, &Vector::zeros(3), &Matrix::identity(2)).is_err());
    }

    #[test]
    fn ratio_examples() {
        let theta = Vector::new(vec![1.0, -1.0, 0.5]).unwrap();
        let cov = CovarianceSpec::isotropic(3, 1.0).unwrap();
        let test = sample_gaussian_dataset(&cov, &theta, 50, 0.3, 1).unwrap();
        assert_eq!(error_ratio(&theta, &theta, &test).unwrap(), 1.0);
        let clean = sample_gaussian_dataset(&cov, &theta, 50, 0.0, 1).unwrap();
        assert_eq!(error_ratio(&Vector::zeros(3), &theta, &clean).unwrap(), f64::INFINITY);
    }

    #[test]
    fn ratio_approaches_one() {
        let theta = Vector::new(vec![1.0; 4]).unwrap();
        let test = sample_gaussian_dataset(&CovarianceSpec::isotropic(4, 1.0).unwrap(), &theta, 200, 0.5, 2).unwrap();
        let dir = Vector::new(vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let mut last = f64::INFINITY;
        for e in 0..8 {
            let h = theta.axpy(10f64.powi(-e), &dir).unwrap();
            let r = error_ratio(&h, &theta, &test).unwrap();
            assert!((r - 1.0).abs() <= (last - 1.0).abs() + 1e-15);
            last = r;
        }
        assert!((last - 1.0).abs() < 1e-6);
    }
}
