//! Experiment configuration. Defaults describe the full d = 1000 sweep.

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::matrixkit::DEFAULT_DROP_TOL;
use crate::source_models::TrainMode;
use crate::synth::{CovarianceSpec, EigenLaw, Rotation};
use crate::transfer::{LearningRate, Phase2Solver};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub d: usize,
    pub k: usize,
    /// Dimension of the shared subspace.
    pub l: usize,
    /// Expected dictionary size; equals `l` in oracle mode.
    pub q_target: usize,
    pub m: usize,
    pub n_s: usize,
    /// `(n₁, n₂)` pairs.
    pub sample_configs: Vec<(usize, usize)>,
    #[serde(with = "crate::synth::db_serde::seq")]
    pub ratios_db: Vec<f64>,
    pub sigma: f64,
    /// Standard deviation of the target's in-subspace coordinates.
    pub head_scale: f64,
    pub tau: f64,
    pub floor: f64,
    /// Overrides the exponential-decay law built from `tau` and `floor`.
    pub covariance: Option<EigenLaw>,
    pub n_test: usize,
    pub n_trials: usize,
    pub base_seed: u64,
    /// Phase 1 uses the true subspace basis instead of a learned dictionary.
    pub oracle_vstar: bool,
    pub phase2: Phase2Solver,
    pub source_mode: TrainMode,
    pub drop_tol: f64,
}

/// Phase 2 as run by the harness: gradient descent with the automatic step
/// and a 10⁵-iteration budget, keeping the last iterate when the budget
/// runs out.
pub fn budgeted_gd() -> Phase2Solver {
    Phase2Solver::GradientDescent {
        learning_rate: LearningRate::Auto,
        max_iters: 100_000,
        grad_tol: None,
        spectral: true,
        keep_unconverged: true,
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            d: 1000,
            k: 1,
            l: 50,
            q_target: 50,
            m: 60,
            n_s: 2000,
            sample_configs: vec![(100, 100), (200, 200), (300, 300), (1000, 1000)],
            ratios_db: vec![50.0, 20.0, 10.0, 5.0, 1.0],
            sigma: 0.1,
            head_scale: 60.0,
            tau: 1.0,
            floor: 1e-4,
            covariance: None,
            n_test: 500,
            n_trials: 10,
            base_seed: 0,
            oracle_vstar: true,
            phase2: budgeted_gd(),
            source_mode: TrainMode::CanonicalRank1,
            drop_tol: DEFAULT_DROP_TOL,
        }
    }
}

/// A reduced world (`d = 200`, `q = 20`, 3 trials) for quick ordering checks.
pub fn smoke_config() -> ExperimentConfig {
    ExperimentConfig {
        d: 200,
        l: 20,
        q_target: 20,
        m: 24,
        n_s: 400,
        sample_configs: vec![(40, 40), (80, 80), (120, 120), (200, 200)],
        n_trials: 3,
        ..ExperimentConfig::default()
    }
}

impl ExperimentConfig {
    /// Shared by sources and target.
    pub fn covariance_spec(&self) -> Result<CovarianceSpec, HarnessError> {
        let law = self.covariance.clone().unwrap_or(EigenLaw::ExponentialDecay {
            tau: self.tau,
            floor: self.floor,
        });
        Ok(CovarianceSpec::new(self.d, law, Rotation::Identity)?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::InvalidConfig(msg));
        for (name, v) in [
            ("d", self.d),
            ("k", self.k),
            ("l", self.l),
            ("q_target", self.q_target),
            ("m", self.m),
            ("n_s", self.n_s),
            ("n_test", self.n_test),
            ("n_trials", self.n_trials),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if !(self.k <= self.l && self.l <= self.d.min(self.m * self.k)) {
            return bad(format!(
                "need k <= l <= min(d, m*k), got k={}, l={}, d={}, m={}",
                self.k, self.l, self.d, self.m
            ));
        }
        if self.oracle_vstar && self.q_target != self.l {
            return bad(format!(
                "oracle mode uses the l = {} dimensional subspace, but q_target = {}",
                self.l, self.q_target
            ));
        }
        if self.sample_configs.is_empty() {
            return bad("sample_configs is empty".into());
        }
        if let Some((a, b)) = self.sample_configs.iter().find(|(a, b)| *a == 0 || *b == 0) {
            return bad(format!("sample configuration ({a}, {b}) must be positive"));
        }
        if self.ratios_db.is_empty() {
            return bad("ratios_db is empty".into());
        }
        if let Some(r) = self.ratios_db.iter().find(|r| r.is_nan() || **r == f64::NEG_INFINITY) {
            return bad(format!("ratio {r} dB is not allowed"));
        }
        for (name, v) in [("sigma", self.sigma), ("floor", self.floor)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        for (name, v) in [("head_scale", self.head_scale), ("tau", self.tau), ("drop_tol", self.drop_tol)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        self.covariance_spec()?;
        Ok(())
    }
}
