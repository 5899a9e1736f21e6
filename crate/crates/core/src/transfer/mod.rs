//! Two-phase transfer: a head fit on the source dictionary, then
//! full-model fine-tuning, plus the no-transfer baseline.

mod phase1;
mod phase2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrixkit::{
    least_squares, min_norm_interpolant, ordinary_least_squares, LinalgError, OrthonormalBasis,
    Vector, DEFAULT_RCOND,
};
use crate::synth::Dataset;

pub use phase1::{build_dictionary, phase1_fit, representation_gap};
pub use phase2::{
    phase2_closed_form, phase2_finetune_gd, phase2_finetune_gd_spectral, GdConfig, GdResult,
    LearningRate,
};

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("interpolation needs n <= d, got n = {n}, d = {d}")]
    NotOverparameterized { n: usize, d: usize },

    #[error("gradient descent diverged at iteration {iteration} (objective {objective:.3e})")]
    Diverged { iteration: usize, objective: f64 },

    #[error("gradient descent stopped after {} iterations with gradient norm {:.3e}", .0.iters, .0.grad_norm)]
    NotConverged(Box<GdResult>),

    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// No transfer: the minimum-norm interpolant of the pooled data when
/// `n < d`, ordinary least squares otherwise.
pub fn scratch_baseline(data_all: &Dataset) -> Result<Vector, TransferError> {
    let (x, y) = (data_all.x(), data_all.y());
    let (n, d) = x.shape();
    if n < d {
        Ok(min_norm_interpolant(x, y, &vec![0.0; d]).or_else(|_| least_squares(x, y, DEFAULT_RCOND))?)
    } else {
        Ok(ordinary_least_squares(x, y)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Phase2Solver {
    ClosedForm,
    GradientDescent {
        learning_rate: LearningRate,
        max_iters: usize,
        grad_tol: Option<f64>,
        /// Evaluate the iterates through the eigendecomposition of `X Xᵀ`
        /// rather than stepping.
        spectral: bool,
        /// Keep the last iterate when the budget runs out instead of failing.
        keep_unconverged: bool,
    },
}

impl Default for Phase2Solver {
    fn default() -> Self {
        Phase2Solver::GradientDescent {
            learning_rate: LearningRate::Auto,
            max_iters: 100_000,
            grad_tol: None,
            spectral: false,
            keep_unconverged: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase2Method {
    GradientDescent,
    ClosedForm,
    /// `n₂ > d`: no interpolant exists; least squares is used instead.
    OlsFallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferOutcome {
    pub vhat: OrthonormalBasis,
    pub what_t: Vector,
    pub theta_phase1: Vector,
    pub theta_phase2: Vector,
    pub phase2_method: Phase2Method,
    pub gd_iters_used: usize,
    pub gd_final_grad_norm: f64,
    pub gd_converged: bool,
}

/// Phase 2 from `theta0`, falling back to least squares when the data are
/// not over-parameterized.
pub fn phase2(theta0: &Vector, data2: &Dataset, solver: &Phase2Solver) -> Result<(GdResult, Phase2Method), TransferError> {
    let (n, d) = data2.x().shape();
    if n > d {
        log::info!("phase 2 has n = {n} > d = {d}; using least squares instead of interpolation");
        let theta = ordinary_least_squares(data2.x(), data2.y())?;
        let grad = data2.x().tr_matvec(&data2.x().matvec(&theta)?.sub(data2.y())?)?;
        let result = GdResult {
            theta,
            iters: 0,
            grad_norm: 2.0 / n as f64 * grad.norm(),
            converged: true,
        };
        return Ok((result, Phase2Method::OlsFallback));
    }
    match *solver {
        Phase2Solver::ClosedForm => {
            let theta = phase2_closed_form(theta0, data2)?;
            let result = GdResult { theta, iters: 0, grad_norm: 0.0, converged: true };
            Ok((result, Phase2Method::ClosedForm))
        }
        Phase2Solver::GradientDescent { learning_rate, max_iters, grad_tol, spectral, keep_unconverged } => {
            let cfg = GdConfig { learning_rate, max_iters, grad_tol };
            let run = if spectral {
                phase2_finetune_gd_spectral(theta0, data2, &cfg)
            } else {
                phase2_finetune_gd(theta0, data2, &cfg)
            };
            match run {
                Ok(r) => Ok((r, Phase2Method::GradientDescent)),
                Err(TransferError::NotConverged(r)) if keep_unconverged => {
                    log::debug!("phase 2 budget exhausted at gradient norm {:.3e}", r.grad_norm);
                    Ok((*r, Phase2Method::GradientDescent))
                }
                Err(e) => Err(e),
            }
        }
    }
}

/// Phase 1 on `data1` against `vhat`, then Phase 2 on `data2`.
pub fn run_transfer(
    vhat: OrthonormalBasis,
    data1: &Dataset,
    data2: &Dataset,
    solver: &Phase2Solver,
) -> Result<TransferOutcome, TransferError> {
    let (what_t, theta_phase1) = phase1_fit(&vhat, data1)?;
    let (gd, method) = phase2(&theta_phase1, data2, solver)?;
    Ok(TransferOutcome {
        vhat,
        what_t,
        theta_phase1,
        theta_phase2: gd.theta,
        phase2_method: method,
        gd_iters_used: gd.iters,
        gd_final_grad_norm: gd.grad_norm,
        gd_converged: gd.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{sample_gaussian_dataset, CovarianceSpec};

    fn data(n: usize, d: usize, sigma: f64, seed: u64) -> (Dataset, Vector) {
        let theta = Vector::new((0..d).map(|i| 1.0 / (1.0 + i as f64)).collect()).unwrap();
        let cov = CovarianceSpec::isotropic(d, 1.0).unwrap();
        (sample_gaussian_dataset(&cov, &theta, n, sigma, seed).unwrap(), theta)
    }

    #[test]
    fn scratch_recovers_truth_when_overdetermined() {
        let (d, theta) = data(40, 10, 0.0, 1);
        assert!(scratch_baseline(&d).unwrap().max_abs_diff(&theta) < 1e-8);
    }

    #[test]
    fn scratch_interpolates_when_underdetermined() {
        let (d, _) = data(6, 20, 0.5, 2);
        let theta = scratch_baseline(&d).unwrap();
        let fit = d.x().matvec(&theta).unwrap();
        assert!(fit.max_abs_diff(d.y()) < 1e-10);
    }

    #[test]
    fn tall_phase2_falls_back_to_least_squares() {
        let (d, theta) = data(30, 8, 0.0, 3);
        let (r, method) = phase2(&Vector::zeros(8), &d, &Phase2Solver::default()).unwrap();
        assert_eq!(method, Phase2Method::OlsFallback);
        assert!(r.theta.max_abs_diff(&theta) < 1e-8);
    }

    #[test]
    fn budgeted_solver_keeps_last_iterate() {
        let (d, _) = data(20, 25, 0.1, 4);
        let strict = Phase2Solver::GradientDescent {
            learning_rate: LearningRate::Auto,
            max_iters: 2,
            grad_tol: None,
            spectral: true,
            keep_unconverged: false,
        };
        assert!(matches!(phase2(&Vector::zeros(25), &d, &strict), Err(TransferError::NotConverged(_))));
        let lenient = match strict {
            Phase2Solver::GradientDescent { learning_rate, max_iters, grad_tol, spectral, .. } => {
                Phase2Solver::GradientDescent { learning_rate, max_iters, grad_tol, spectral, keep_unconverged: true }
            }
            s => s,
        };
        let (r, _) = phase2(&Vector::zeros(25), &d, &lenient).unwrap();
        assert_eq!(r.iters, 2);
        assert!(!r.converged);
    }
}
