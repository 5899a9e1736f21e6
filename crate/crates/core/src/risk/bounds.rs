//! Evaluable forms of the Phase-1 and Phase-2 excess-risk bounds.
//!
//! Every suppressed universal constant is set to 1, so the numbers describe
//! the shape of the bounds, not certified values.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ranks::{effective_ranks, DEFAULT_B};
use super::RiskError;

pub const DEFAULT_DELTA: f64 = 0.05;
pub const CONSTANTS_NOTE: &str = "up to universal constants";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundInputs {
    pub n_s: usize,
    pub n1: usize,
    pub n2: usize,
    pub m: usize,
    pub k: usize,
    pub d: usize,
    pub q: usize,
    pub sigma: f64,
    pub epsilon: f64,
    /// Covariance dominance constant.
    pub r: f64,
    /// Ratio of the largest to the smallest eigenvalue over all covariances.
    pub kappa: f64,
    pub delta: f64,
    pub b: f64,
    /// Target covariance spectrum, descending. Only the Phase-2 bound uses it.
    pub target_eigs: Vec<f64>,
}

impl BoundInputs {
    fn validate(&self) -> Result<(), RiskError> {
        let bad = |msg: String| Err(RiskError::InvalidArgument(msg));
        for (name, v) in [
            ("n_s", self.n_s),
            ("n1", self.n1),
            ("n2", self.n2),
            ("m", self.m),
            ("k", self.k),
            ("d", self.d),
            ("q", self.q),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be non-negative, got {}", self.sigma));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be non-negative, got {}", self.epsilon));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return bad(format!("r must be positive, got {}", self.r));
        }
        if !(self.kappa >= 1.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be at least 1, got {}", self.kappa));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.b > 1.0 && self.b.is_finite()) {
            return bad(format!("b must exceed 1, got {}", self.b));
        }
        Ok(())
    }
}

impl Default for BoundInputs {
    fn default() -> Self {
        Self {
            n_s: 1,
            n1: 1,
            n2: 1,
            m: 1,
            k: 1,
            d: 1,
            q: 1,
            sigma: 0.0,
            epsilon: 0.0,
            r: 1.0,
            kappa: 1.0,
            delta: DEFAULT_DELTA,
            b: DEFAULT_B,
            target_eigs: vec![1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundComponents {
    /// `σ²(q + log(1/δ)) / n₁`, the head-fit noise.
    pub head: f64,
    /// `ε²`.
    pub approximation: f64,
    /// `σ²[log(1/δ)/(r n_s m) + (k d log(κ n_s) + k)/(r n_s)]`.
    pub source: f64,
    /// `σ² log(1/δ) (k*/n₂ + n₂/R_{k*})`; absent when `k*` does not exist.
    pub variance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub phase: u8,
    pub note: String,
    /// Factor from the empirical-covariance error applied to the Phase-1
    /// terms: `(λ₁/λ_d)(r₀/n₂)` in Phase 2, 1 in Phase 1.
    pub amplifier: f64,
    pub components: BoundComponents,
    /// Sum of the components; `None` when the variance term is unavailable.
    pub total: Option<f64>,
    pub k_star: Option<usize>,
    pub inputs: BoundInputs,
}

impl BoundReport {
    pub const CSV_HEADER: [&'static str; 9] = [
        "phase",
        "amplifier",
        "head",
        "approximation",
        "source",
        "variance",
        "total",
        "k_star",
        "note",
    ];

    pub fn csv_record(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "none".into());
        vec![
            self.phase.to_string(),
            self.amplifier.to_string(),
            self.components.head.to_string(),
            self.components.approximation.to_string(),
            self.components.source.to_string(),
            opt(self.components.variance),
            opt(self.total),
            self.k_star.map(|k| k.to_string()).unwrap_or_else(|| "none".into()),
            self.note.clone(),
        ]
    }

    pub fn write_csv<W: Write>(reports: &[BoundReport], w: W) -> Result<(), RiskError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::CSV_HEADER)?;
        for r in reports {
            out.write_record(r.csv_record())?;
        }
        out.flush()?;
        Ok(())
    }
}

fn phase1_terms(inp: &BoundInputs) -> (f64, f64, f64) {
    let s2 = inp.sigma * inp.sigma;
    let log_delta = (1.0 / inp.delta).ln();
    let head = s2 * (inp.q as f64 + log_delta) / inp.n1 as f64;
    let approximation = inp.epsilon * inp.epsilon;
    let (k, d, ns, m) = (inp.k as f64, inp.d as f64, inp.n_s as f64, inp.m as f64);
    let source = s2
        * (log_delta / (inp.r * ns * m) + (k * d * (inp.kappa * ns).ln() + k) / (inp.r * ns));
    (head, approximation, source)
}

/// Phase-1 bound:
/// `σ²(q + log(1/δ))/n₁ + ε² + σ²[log(1/δ)/(r n_s m) + (k d log(κ n_s) + k)/(r n_s)]`.
pub fn theorem1_bound(inputs: &BoundInputs) -> Result<BoundReport, RiskError> {
    inputs.validate()?;
    let (head, approximation, source) = phase1_terms(inputs);
    let components = BoundComponents { head, approximation, source, variance: Some(0.0) };
    Ok(BoundReport {
        phase: 1,
        note: CONSTANTS_NOTE.into(),
        amplifier: 1.0,
        components,
        total: Some(head + approximation + source),
        k_star: None,
        inputs: inputs.clone(),
    })
}

/// Phase-2 bound: the Phase-1 terms amplified by `(λ₁/λ_d)(r₀/n₂)` plus the
/// interpolation variance `σ² log(1/δ)(k*/n₂ + n₂/R_{k*})`.
pub fn theorem2_bound(inputs: &BoundInputs) -> Result<BoundReport, RiskError> {
    inputs.validate()?;
    let ranks = effective_ranks(&inputs.target_eigs, inputs.n2, inputs.b)?;
    let eigs = &inputs.target_eigs;
    let n2 = inputs.n2 as f64;
    let amplifier = eigs[0] / eigs[eigs.len() - 1] * ranks.r[0] / n2;
    let (head, approximation, source) = phase1_terms(inputs);
    let log_delta = (1.0 / inputs.delta).ln();
    let variance = ranks.k_star.map(|k| {
        inputs.sigma * inputs.sigma * log_delta * (k as f64 / n2 + n2 / ranks.big_r[k])
    });
    let components = BoundComponents {
        head: amplifier * head,
        approximation: amplifier * approximation,
        source: amplifier * source,
        variance,
    };
    Ok(BoundReport {
        phase: 2,
        note: CONSTANTS_NOTE.into(),
        amplifier,
        total: variance.map(|v| components.head + components.approximation + components.source + v),
        components,
        k_star: ranks.k_star,
        inputs: inputs.clone(),
    })
}
