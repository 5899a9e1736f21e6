//! Empirical source training in the factored form `θ = B w`.
//!
//! The factored least-squares objective only identifies the product
//! `θ̂ = B̂ŵ`, which equals the unconstrained least-squares solution. The
//! canonical rank-one factorization stores that product as a single unit
//! column; alternating least squares is available for experiments.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrixkit::{
    io, least_squares, min_norm_interpolant, orthonormalize, ordinary_least_squares, LinalgError,
    Matrix, Vector, DEFAULT_DROP_TOL, DEFAULT_RCOND,
};
use crate::synth::seed::{derive_seed, normal_matrix, stream_rng};
use crate::synth::{Dataset, SynthError, TaskEnsemble};

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("expected {expected} items, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error(transparent)]
    Synth(#[from] SynthError),

    #[error(transparent)]
    Format(#[from] io::FormatError),

    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrainMode {
    CanonicalRank1,
    Als { iters: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceModel {
    pub bhat: Matrix,
    pub what: Vector,
    /// Cached `bhat · what`.
    pub theta_hat: Vector,
    pub train_mse: f64,
    /// The fitted model is exactly zero, so `bhat` carries no direction.
    pub degenerate: bool,
    /// Training objective `‖y − XBw‖²` after each ALS sweep.
    pub objective_history: Vec<f64>,
}

impl SourceModel {
    pub fn d(&self) -> usize {
        self.bhat.rows()
    }

    pub fn k(&self) -> usize {
        self.bhat.cols()
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), SourceError> {
        io::save_matrix(&dir.join(format!("{stem}.bhat.rtxm")), &self.bhat)?;
        io::save_vector(&dir.join(format!("{stem}.what.rtxm")), &self.what)?;
        let manifest = SourceManifest {
            d: self.d(),
            k: self.k(),
            train_mse: self.train_mse,
            degenerate: self.degenerate,
            objective_history: self.objective_history.clone(),
        };
        io::write_atomic(&dir.join(format!("{stem}.json")), |w| {
            serde_json::to_writer_pretty(&mut *w, &manifest).map_err(std::io::Error::from)
        })?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<SourceModel, SourceError> {
        let file = std::fs::File::open(dir.join(format!("{stem}.json")))?;
        let manifest: SourceManifest = serde_json::from_reader(std::io::BufReader::new(file))?;
        let bhat = io::load_matrix(&dir.join(format!("{stem}.bhat.rtxm")))?;
        let what = io::load_vector(&dir.join(format!("{stem}.what.rtxm")))?;
        if bhat.shape() != (manifest.d, manifest.k) || what.dim() != manifest.k {
            return Err(SourceError::InvalidArgument(format!(
                "{stem}: stored shapes disagree with manifest ({}x{})",
                manifest.d, manifest.k
            )));
        }
        let theta_hat = bhat.matvec(&what)?;
        Ok(SourceModel {
            bhat,
            what,
            theta_hat,
            train_mse: manifest.train_mse,
            degenerate: manifest.degenerate,
            objective_history: manifest.objective_history,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceManifest {
    pub d: usize,
    pub k: usize,
    pub train_mse: f64,
    pub degenerate: bool,
    pub objective_history: Vec<f64>,
}

/// Minimizer of `‖y − Xθ‖²`: unique OLS when `n ≥ d`, the minimum-norm
/// solution otherwise.
pub fn unconstrained_fit(x: &Matrix, y: &[f64]) -> Result<Vector, LinalgError> {
    if x.rows() >= x.cols() {
        ordinary_least_squares(x, y)
    } else {
        min_norm_interpolant(x, y, &vec![0.0; x.cols()])
            .or_else(|_| least_squares(x, y, DEFAULT_RCOND))
    }
}

fn objective(x: &Matrix, y: &[f64], theta: &[f64]) -> Result<f64, LinalgError> {
    let fit = x.matvec(theta)?;
    Ok(y.iter().zip(fit.iter()).map(|(a, b)| (a - b).powi(2)).sum())
}

pub fn train_source(data: &Dataset, k: usize, mode: TrainMode) -> Result<SourceModel, SourceError> {
    if k == 0 {
        return Err(SourceError::InvalidArgument("k must be at least 1".into()));
    }
    let (x, y) = (data.x(), data.y().as_slice());
    let (n, d) = x.shape();
    if k > d {
        return Err(SourceError::InvalidArgument(format!("k = {k} exceeds d = {d}")));
    }
    let (bhat, what, history) = match mode {
        TrainMode::CanonicalRank1 => {
            let theta = unconstrained_fit(x, y)?;
            let scale = theta.norm();
            let mut bhat = Matrix::zeros(d, k);
            let mut what = vec![0.0; k];
            if scale > 0.0 {
                for i in 0..d {
                    bhat.set(i, 0, theta[i] / scale);
                }
                what[0] = scale;
            }
            (bhat, Vector::from_raw(what), Vec::new())
        }
        TrainMode::Als { iters, seed } => {
            if iters == 0 {
                return Err(SourceError::InvalidArgument("ALS needs at least one iteration".into()));
            }
            als(x, y, k, iters, seed)?
        }
    };
    let theta_hat = bhat.matvec(&what)?;
    let train_mse = objective(x, y, &theta_hat)? / n as f64;
    Ok(SourceModel {
        degenerate: theta_hat.iter().all(|v| *v == 0.0),
        bhat,
        what,
        theta_hat,
        train_mse,
        objective_history: history,
    })
}

/// Alternating minimization from a seeded orthonormal `B`. The head step
/// is an exact least-squares solve on `XB`; the representation step moves
/// `B` by the smallest rank-one update that makes `Bw` a minimizer.
fn als(
    x: &Matrix,
    y: &[f64],
    k: usize,
    iters: usize,
    seed: u64,
) -> Result<(Matrix, Vector, Vec<f64>), SourceError> {
    let d = x.cols();
    let init = normal_matrix(&mut stream_rng(seed, 0), d, k);
    let mut b = orthonormalize(&init, DEFAULT_DROP_TOL)?.into_matrix();
    if b.cols() < k {
        return Err(SourceError::InvalidArgument("ALS initialization lost rank".into()));
    }
    let mut w = Vector::zeros(k);
    let mut history = Vec::with_capacity(iters);
    for _ in 0..iters {
        w = least_squares(&x.matmul(&b)?, y, DEFAULT_RCOND)?;
        if w.norm() == 0.0 {
            w = Vector::unit(k, 0);
        }
        let current = b.matvec(&w)?;
        let fit = x.matvec(&current)?;
        let resid: Vec<f64> = y.iter().zip(fit.iter()).map(|(a, f)| a - f).collect();
        let step = unconstrained_fit(x, &resid)?;
        let ww = w.norm_squared();
        for i in 0..d {
            for j in 0..k {
                let v = b.get(i, j) + step[i] * w[j] / ww;
                b.set(i, j, v);
            }
        }
        history.push(objective(x, y, &b.matvec(&w)?)?);
    }
    Ok((b, w, history))
}

/// Trains every source independently and in parallel. ALS seeds are
/// derived per source from the mode's seed.
pub fn train_all_sources(
    datasets: &[Dataset],
    k: usize,
    mode: TrainMode,
) -> Result<Vec<SourceModel>, SourceError> {
    datasets
        .par_iter()
        .enumerate()
        .map(|(i, data)| {
            let mode = match mode {
                TrainMode::Als { iters, seed } => TrainMode::Als {
                    iters,
                    seed: derive_seed(seed, i as u64),
                },
                m => m,
            };
            train_source(data, k, mode)
        })
        .collect()
}

/// `Σᵢ ‖Xᵢ(B̂ᵢŵᵢ − Bᵢ*wᵢ*)‖²` over aligned models, ensemble sources, and
/// training sets.
pub fn source_excess_energy(
    models: &[SourceModel],
    ensemble: &TaskEnsemble,
    datasets: &[Dataset],
) -> Result<f64, SourceError> {
    let m = ensemble.m();
    for got in [models.len(), datasets.len()] {
        if got != m {
            return Err(SourceError::LengthMismatch { expected: m, got });
        }
    }
    let mut total = 0.0;
    for (i, (model, data)) in models.iter().zip(datasets).enumerate() {
        let head = &ensemble.source_heads[i];
        let truth = head.bstar.matvec(&head.wstar)?;
        let diff = model.theta_hat.sub(&truth)?;
        total += data.x().matvec(&diff)?.norm_squared();
    }
    Ok(total)
}

pub fn save_models(dir: &Path, models: &[SourceModel]) -> Result<(), SourceError> {
    for (i, m) in models.iter().enumerate() {
        m.save(dir, &format!("source_{i:03}"))?;
    }
    Ok(())
}

/// Loads `source_000`, `source_001`, ... until the next manifest is absent.
pub fn load_models(dir: &Path) -> Result<Vec<SourceModel>, SourceError> {
    let mut models = Vec::new();
    loop {
        let stem = format!("source_{:03}", models.len());
        if !dir.join(format!("{stem}.json")).exists() {
            break;
        }
        models.push(SourceModel::load(dir, &stem)?);
    }
    if models.is_empty() {
        return Err(SourceError::InvalidArgument(format!(
            "no source models found in {}",
            dir.display()
        )));
    }
    Ok(models)
}
