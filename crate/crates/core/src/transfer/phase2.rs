//! Fine-tuning the full model from the Phase-1 initialization.
//!
//! Gradient descent on `f(θ) = ‖X₂θ − y₂‖² / n₂` only moves `θ` inside the
//! row space of `X₂`, so in the over-parameterized regime it converges to
//! the interpolant closest to its starting point.

use serde::{Deserialize, Serialize};

use super::TransferError;
use crate::matrixkit::{min_norm_interpolant, spectral_norm, symmetric_eigen, Matrix, Vector};
use crate::synth::Dataset;

const DIVERGENCE_STREAK: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearningRate {
    /// `η = n / (2 λ_max(X Xᵀ))`, half the stability limit.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GdConfig {
    pub learning_rate: LearningRate,
    pub max_iters: usize,
    /// Gradient-norm stopping threshold; `None` means `1e-10 (1 + ‖y₂‖)`.
    pub grad_tol: Option<f64>,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            learning_rate: LearningRate::Auto,
            max_iters: 100_000,
            grad_tol: None,
        }
    }
}

impl GdConfig {
    pub fn tolerance(&self, y: &[f64]) -> f64 {
        self.grad_tol
            .unwrap_or_else(|| 1e-10 * (1.0 + y.iter().map(|v| v * v).sum::<f64>().sqrt()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdResult {
    pub theta: Vector,
    pub iters: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

fn validate(theta0: &Vector, data: &Dataset, cfg: &GdConfig) -> Result<(), TransferError> {
    if theta0.dim() != data.d() {
        return Err(TransferError::InvalidArgument(format!(
            "initialization has dimension {}, data has {} features",
            theta0.dim(),
            data.d()
        )));
    }
    if cfg.max_iters == 0 {
        return Err(TransferError::InvalidArgument("max_iters must be at least 1".into()));
    }
    if let LearningRate::Fixed(eta) = cfg.learning_rate {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(TransferError::InvalidArgument(format!("learning rate must be positive, got {eta}")));
        }
    }
    Ok(())
}

/// Multiplier `2η/n` applied to `Xᵀ(Xθ − y)` in each update.
fn step_size(x: &Matrix, lr: LearningRate) -> Result<f64, TransferError> {
    let n = x.rows() as f64;
    Ok(match lr {
        LearningRate::Auto => {
            let k = if x.rows() <= x.cols() { x.outer_gram() } else { x.gram() };
            let top = spectral_norm(&k)?;
            if top == 0.0 {
                0.0
            } else {
                1.0 / top
            }
        }
        LearningRate::Fixed(eta) => 2.0 * eta / n,
    })
}

fn finish(result: GdResult) -> Result<GdResult, TransferError> {
    if result.converged {
        Ok(result)
    } else {
        Err(TransferError::NotConverged(Box::new(result)))
    }
}

/// Plain gradient descent
/// `θ ← θ − (2η/n) X₂ᵀ(X₂θ − y₂)`, stopping once `‖∇f‖ ≤ grad_tol`.
pub fn phase2_finetune_gd(theta0: &Vector, data2: &Dataset, cfg: &GdConfig) -> Result<GdResult, TransferError> {
    validate(theta0, data2, cfg)?;
    let (x, y) = (data2.x(), data2.y());
    let n = x.rows() as f64;
    let s = step_size(x, cfg.learning_rate)?;
    let tol = cfg.tolerance(y);

    let mut theta = theta0.clone();
    let mut prev_obj = f64::INFINITY;
    let mut streak = 0;
    let mut iters = 0;
    loop {
        let resid = x.matvec(&theta)?.sub(y)?;
        let obj = resid.norm_squared() / n;
        let back = x.tr_matvec(&resid)?;
        let grad_norm = 2.0 / n * back.norm();
        if !obj.is_finite() {
            return Err(TransferError::Diverged { iteration: iters, objective: obj });
        }
        streak = if obj > prev_obj { streak + 1 } else { 0 };
        if streak >= DIVERGENCE_STREAK {
            return Err(TransferError::Diverged { iteration: iters, objective: obj });
        }
        prev_obj = obj;
        if grad_norm <= tol || iters == cfg.max_iters {
            return finish(GdResult {
                theta,
                iters,
                grad_norm,
                converged: grad_norm <= tol,
            });
        }
        theta = theta.axpy(-s, &back)?;
        iters += 1;
    }
}

/// The same iteration evaluated in closed form.
///
/// With `K = X Xᵀ = Q diag(λ) Qᵀ` and `c = Qᵀ(Xθ₀ − y)`, the iterate after
/// `t` steps of size `s` is `θ₀ − Xᵀ Q diag((1 − (1 − sλ)^t) / λ) c` and its
/// gradient norm is `(2/n) √(Σ λ (1 − sλ)^{2t} c²)`. The stopping time is
/// found by bisection. Requires `n ≤ d` and a step inside the stability
/// region (`s λ_max ≤ 2`).
pub fn phase2_finetune_gd_spectral(
    theta0: &Vector,
    data2: &Dataset,
    cfg: &GdConfig,
) -> Result<GdResult, TransferError> {
    validate(theta0, data2, cfg)?;
    let (x, y) = (data2.x(), data2.y());
    let (n, d) = x.shape();
    if n > d {
        return Err(TransferError::NotOverparameterized { n, d });
    }
    let (vals, q) = symmetric_eigen(&x.outer_gram())?;
    let lambda: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
    let s = match cfg.learning_rate {
        LearningRate::Auto if lambda[0] > 0.0 => 1.0 / lambda[0],
        LearningRate::Auto => 0.0,
        LearningRate::Fixed(eta) => 2.0 * eta / n as f64,
    };
    if s * lambda[0] > 2.0 {
        return Err(TransferError::Diverged { iteration: 0, objective: f64::INFINITY });
    }
    let c = q.tr_matvec(&x.matvec(theta0)?.sub(y)?)?;
    let ln_decay: Vec<f64> = lambda.iter().map(|l| (-s * l).ln_1p()).collect();
    // (1 − sλ)^t and 1 − (1 − sλ)^t from the logarithm; exact at t = 0 and sλ = 1
    let power = |i: usize, t: f64| if t == 0.0 { 1.0 } else { (t * ln_decay[i]).exp() };
    let one_minus_power = |i: usize, t: f64| if t == 0.0 { 0.0 } else { -(t * ln_decay[i]).exp_m1() };
    let grad_norm = |t: usize| -> f64 {
        let sum: f64 = (0..n)
            .map(|i| {
                let decay = if lambda[i] == 0.0 { 0.0 } else { power(i, 2.0 * t as f64) };
                lambda[i] * decay * c[i] * c[i]
            })
            .sum();
        2.0 / n as f64 * sum.max(0.0).sqrt()
    };
    let tol = cfg.tolerance(y);
    let (iters, converged) = if grad_norm(0) <= tol {
        (0, true)
    } else if grad_norm(cfg.max_iters) > tol {
        (cfg.max_iters, false)
    } else {
        // grad_norm is non-increasing in t; find the first t below tol
        let (mut lo, mut hi) = (0usize, cfg.max_iters);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if grad_norm(mid) <= tol {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        (hi, true)
    };
    let t = iters as f64;
    let coeff: Vec<f64> = (0..n)
        .map(|i| {
            let gain = if lambda[i] == 0.0 {
                s * t
            } else {
                one_minus_power(i, t) / lambda[i]
            };
            gain * c[i]
        })
        .collect();
    let alpha = q.matvec(&coeff)?;
    let theta = theta0.sub(&x.tr_matvec(&alpha)?)?;
    finish(GdResult {
        theta,
        iters,
        grad_norm: grad_norm(iters),
        converged,
    })
}

/// Limit of gradient descent: `θ₀ + X₂ᵀ(X₂X₂ᵀ)⁻¹(y₂ − X₂θ₀)`.
pub fn phase2_closed_form(theta0: &Vector, data2: &Dataset) -> Result<Vector, TransferError> {
    let (n, d) = data2.x().shape();
    if n > d {
        return Err(TransferError::NotOverparameterized { n, d });
    }
    Ok(min_norm_interpolant(data2.x(), data2.y(), theta0)?)
}
