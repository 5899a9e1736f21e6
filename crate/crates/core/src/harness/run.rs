//! Trial execution and aggregation.

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::HarnessError;
use crate::matrixkit::Vector;
use crate::risk::error_ratio;
use crate::source_models::train_all_sources;
use crate::synth::seed::derive_seed;
use crate::synth::{
    build_task_ensemble, sample_with, CovarianceSpec, Dataset, EnsembleSpec, RealizedCovariance, TaskEnsemble,
};
use crate::transfer::{build_dictionary, run_transfer, scratch_baseline};

const STREAM_ENSEMBLE: u64 = 0;
const STREAM_DATA: u64 = 1;
const STREAM_PHASE1: u64 = 1;
const STREAM_PHASE2: u64 = 2;
const STREAM_TEST: u64 = 3;
const STREAM_SOURCES: u64 = 100;

/// Outcome of one pipeline execution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellOutcome {
    pub phase1_ratio: f64,
    pub phase2_ratio: f64,
    pub scratch_ratio: f64,
    pub phase1_eer: f64,
    pub phase2_eer: f64,
    pub scratch_eer: f64,
    pub q: usize,
    pub gd_iters: usize,
    pub gd_converged: bool,
}

/// Seed of trial `t`. It does not depend on the cell, so every cell of a
/// trial sees the same world and the same sample streams.
pub fn trial_seed(config: &ExperimentConfig, trial: usize) -> u64 {
    derive_seed(config.base_seed, trial as u64)
}

fn covariance(config: &ExperimentConfig) -> Result<CovarianceSpec, HarnessError> {
    config.covariance_spec()
}

/// Builds the world, fits Phase 1 on `n₁` samples, fine-tunes on a fresh
/// `n₂` samples, fits the scratch baseline on both, and scores all three on
/// a fresh test set.
pub fn run_cell(
    config: &ExperimentConfig,
    sample_config: (usize, usize),
    ratio_db: f64,
    trial_seed: u64,
) -> Result<CellOutcome, HarnessError> {
    config.validate()?;
    let cov = covariance(config)?;
    let realized = cov.realize()?;
    run_cell_with(config, &cov, &realized, sample_config, ratio_db, trial_seed)
}

/// The random inputs of one cell: the task ensemble and the three target
/// samples drawn from it.
#[derive(Debug, Clone)]
pub struct World {
    pub ensemble: TaskEnsemble,
    pub covariance: RealizedCovariance,
    pub data1: Dataset,
    pub data2: Dataset,
    pub test: Dataset,
    /// Seed of the per-trial sample streams, reused for source data.
    pub data_seed: u64,
}

impl World {
    /// `n_s` samples for each of the `m` sources.
    pub fn sample_sources(&self, config: &ExperimentConfig) -> Result<Vec<Dataset>, HarnessError> {
        (0..self.ensemble.m())
            .map(|i| {
                Ok(sample_with(
                    &self.covariance,
                    &self.ensemble.source_theta(i),
                    config.n_s,
                    config.sigma,
                    self.data_seed,
                    STREAM_SOURCES + i as u64,
                )?)
            })
            .collect()
    }
}

/// Everything `run_cell` draws before fitting.
pub fn build_world(
    config: &ExperimentConfig,
    sample_config: (usize, usize),
    ratio_db: f64,
    trial_seed: u64,
) -> Result<World, HarnessError> {
    config.validate()?;
    let cov = covariance(config)?;
    let realized = cov.realize()?;
    build_world_with(config, &cov, realized, sample_config, ratio_db, trial_seed)
}

fn build_world_with(
    config: &ExperimentConfig,
    cov: &CovarianceSpec,
    realized: RealizedCovariance,
    (n1, n2): (usize, usize),
    ratio_db: f64,
    trial_seed: u64,
) -> Result<World, HarnessError> {
    let spec = EnsembleSpec {
        d: config.d,
        k: config.k,
        l: config.l,
        m: config.m,
        in_out_ratio_db: ratio_db,
        sigma: config.sigma,
        head_scale: config.head_scale,
        source_cov: cov.clone(),
        target_cov: cov.clone(),
        seed: derive_seed(trial_seed, STREAM_ENSEMBLE),
    };
    let ensemble = build_task_ensemble(&spec)?;
    let data_seed = derive_seed(trial_seed, STREAM_DATA);
    let theta = &ensemble.theta_target;
    let sample = |n: usize, stream: u64| sample_with(&realized, theta, n, config.sigma, data_seed, stream);
    let data1 = sample(n1, STREAM_PHASE1)?;
    let data2 = sample(n2, STREAM_PHASE2)?;
    let test = sample(config.n_test, STREAM_TEST)?;
    Ok(World {
        ensemble,
        covariance: realized,
        data1,
        data2,
        test,
        data_seed,
    })
}

fn run_cell_with(
    config: &ExperimentConfig,
    cov: &CovarianceSpec,
    realized: &RealizedCovariance,
    sample_config: (usize, usize),
    ratio_db: f64,
    trial_seed: u64,
) -> Result<CellOutcome, HarnessError> {
    let world = build_world_with(config, cov, realized.clone(), sample_config, ratio_db, trial_seed)?;
    let theta = &world.ensemble.theta_target;
    let vhat = if config.oracle_vstar {
        world.ensemble.vstar.clone()
    } else {
        let models = train_all_sources(&world.sample_sources(config)?, config.k, config.source_mode)?;
        let vhat = build_dictionary(&models, config.drop_tol)?;
        if vhat.rank() != config.q_target {
            log::info!("learned dictionary has q = {} (q_target = {})", vhat.rank(), config.q_target);
        }
        vhat
    };
    let q = vhat.rank();
    let outcome = run_transfer(vhat, &world.data1, &world.data2, &config.phase2)?;
    let scratch = scratch_baseline(&world.data1.concat(&world.data2)?)?;

    let eer = |t: &Vector| -> Result<f64, HarnessError> {
        Ok(realized.quadratic_form(&t.sub(theta)?).max(0.0))
    };
    let test = &world.test;
    Ok(CellOutcome {
        phase1_ratio: error_ratio(&outcome.theta_phase1, theta, test)?,
        phase2_ratio: error_ratio(&outcome.theta_phase2, theta, test)?,
        scratch_ratio: error_ratio(&scratch, theta, test)?,
        phase1_eer: eer(&outcome.theta_phase1)?,
        phase2_eer: eer(&outcome.theta_phase2)?,
        scratch_eer: eer(&scratch)?,
        q,
        gd_iters: outcome.gd_iters_used,
        gd_converged: outcome.gd_converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub n1: usize,
    pub n2: usize,
    #[serde(with = "crate::synth::db_serde")]
    pub ratio_db: f64,
    pub trial: usize,
    pub seed: u64,
    /// `None` when the trial failed; the reason is in `error`.
    pub outcome: Option<CellOutcome>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub n1: usize,
    pub n2: usize,
    #[serde(with = "crate::synth::db_serde")]
    pub ratio_db: f64,
    pub phase1_mean: f64,
    pub phase1_se: f64,
    pub phase2_mean: f64,
    pub phase2_se: f64,
    pub scratch_mean: f64,
    pub scratch_se: f64,
    /// Successful trials entering the means.
    pub trials: usize,
    pub failed: usize,
    /// Trials whose Phase-2 descent used its whole iteration budget.
    pub unconverged: usize,
}

impl ResultRow {
    pub fn is_partial(&self) -> bool {
        self.failed > 0
    }
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Every trial of every cell, in cell-major then trial order.
pub fn run_trials(config: &ExperimentConfig) -> Result<Vec<TrialRecord>, HarnessError> {
    config.validate()?;
    let cov = covariance(config)?;
    let realized = cov.realize()?;
    let mut jobs = Vec::new();
    for &(n1, n2) in &config.sample_configs {
        for &ratio in &config.ratios_db {
            for trial in 0..config.n_trials {
                jobs.push((n1, n2, ratio, trial));
            }
        }
    }
    let records = jobs
        .into_par_iter()
        .map(|(n1, n2, ratio_db, trial)| {
            let seed = trial_seed(config, trial);
            let result = run_cell_with(config, &cov, &realized, (n1, n2), ratio_db, seed);
            if let Err(e) = &result {
                log::warn!("trial {trial} of ({n1}, {n2}, {ratio_db} dB) excluded: {e}");
            }
            let (outcome, error) = match result {
                Ok(o) => (Some(o), None),
                Err(e) => (None, Some(e.to_string())),
            };
            TrialRecord { n1, n2, ratio_db, trial, seed, outcome, error }
        })
        .collect();
    Ok(records)
}

/// Folds trial records into one row per cell, in configuration order.
pub fn aggregate(config: &ExperimentConfig, records: &[TrialRecord]) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for &(n1, n2) in &config.sample_configs {
        for &ratio_db in &config.ratios_db {
            let cell: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.n1 == n1 && r.n2 == n2 && r.ratio_db.to_bits() == ratio_db.to_bits())
                .collect();
            let ok: Vec<&CellOutcome> = cell.iter().filter_map(|r| r.outcome.as_ref()).collect();
            let pick = |f: fn(&CellOutcome) -> f64| mean_and_se(&ok.iter().map(|o| f(o)).collect::<Vec<_>>());
            let (phase1_mean, phase1_se) = pick(|o| o.phase1_ratio);
            let (phase2_mean, phase2_se) = pick(|o| o.phase2_ratio);
            let (scratch_mean, scratch_se) = pick(|o| o.scratch_ratio);
            rows.push(ResultRow {
                n1,
                n2,
                ratio_db,
                phase1_mean,
                phase1_se,
                phase2_mean,
                phase2_se,
                scratch_mean,
                scratch_se,
                trials: ok.len(),
                failed: cell.len() - ok.len(),
                unconverged: ok.iter().filter(|o| !o.gd_converged).count(),
            });
        }
    }
    rows
}

/// One row per `(sample_config, ratio_db)`.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<ResultRow>, HarnessError> {
    let records = run_trials(config)?;
    let rows = aggregate(config, &records);
    for r in rows.iter().filter(|r| r.is_partial()) {
        log::warn!("row ({}, {}, {} dB) is partial: {} of {} trials failed", r.n1, r.n2, r.ratio_db, r.failed, r.failed + r.trials);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingReport {
    /// Scratch error falls as the pooled sample grows, for every ratio.
    pub scratch_decreases_with_n: bool,
    /// Phase-1 error rises as the ratio falls, for every sample configuration.
    pub phase1_increases_as_ratio_falls: bool,
    /// At the largest configuration, Phase 2 is no worse than Phase 1 for
    /// every ratio of at most 20 dB.
    pub phase2_helps_at_largest: bool,
    pub violations: Vec<String>,
}

impl OrderingReport {
    pub fn all_hold(&self) -> bool {
        self.scratch_decreases_with_n && self.phase1_increases_as_ratio_falls && self.phase2_helps_at_largest
    }
}

pub fn check_orderings(rows: &[ResultRow]) -> OrderingReport {
    let mut violations = Vec::new();
    let mut ratios: Vec<f64> = Vec::new();
    let mut configs: Vec<(usize, usize)> = Vec::new();
    for r in rows {
        if !ratios.iter().any(|x| x.to_bits() == r.ratio_db.to_bits()) {
            ratios.push(r.ratio_db);
        }
        if !configs.contains(&(r.n1, r.n2)) {
            configs.push((r.n1, r.n2));
        }
    }

    let mut a = true;
    for &ratio in &ratios {
        let mut band: Vec<&ResultRow> = rows.iter().filter(|r| r.ratio_db.to_bits() == ratio.to_bits()).collect();
        band.sort_by_key(|r| r.n1 + r.n2);
        for w in band.windows(2) {
            if !(w[1].scratch_mean < w[0].scratch_mean) {
                a = false;
                violations.push(format!(
                    "scratch at {ratio} dB: ({}, {}) -> {} but ({}, {}) -> {}",
                    w[0].n1, w[0].n2, w[0].scratch_mean, w[1].n1, w[1].n2, w[1].scratch_mean
                ));
            }
        }
    }

    let mut b = true;
    for &(n1, n2) in &configs {
        let mut block: Vec<&ResultRow> = rows.iter().filter(|r| (r.n1, r.n2) == (n1, n2)).collect();
        block.sort_by(|x, y| y.ratio_db.total_cmp(&x.ratio_db));
        for w in block.windows(2) {
            if !(w[1].phase1_mean > w[0].phase1_mean) {
                b = false;
                violations.push(format!(
                    "phase1 at ({n1}, {n2}): {} dB -> {} but {} dB -> {}",
                    w[0].ratio_db, w[0].phase1_mean, w[1].ratio_db, w[1].phase1_mean
                ));
            }
        }
    }

    let mut c = true;
    if let Some(&largest) = configs.iter().max_by_key(|(a, b)| a + b) {
        for r in rows.iter().filter(|r| (r.n1, r.n2) == largest && r.ratio_db <= 20.0) {
            if !(r.phase2_mean <= r.phase1_mean) {
                c = false;
                violations.push(format!(
                    "phase2 at ({}, {}, {} dB): {} exceeds phase1 {}",
                    r.n1, r.n2, r.ratio_db, r.phase2_mean, r.phase1_mean
                ));
            }
        }
    }

    OrderingReport {
        scratch_decreases_with_n: a,
        phase1_increases_as_ratio_falls: b,
        phase2_helps_at_largest: c,
        violations,
    }
}
