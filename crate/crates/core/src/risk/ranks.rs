//! Effective ranks of a covariance spectrum.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::RiskError;

pub const DEFAULT_B: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveRankReport {
    /// `r_k = Σ_{i>k} λᵢ / λ_{k+1}` for `k = 0..d-1`.
    #[serde(rename = "r_k")]
    pub r: Vec<f64>,
    /// `R_k = (Σ_{i>k} λᵢ)² / Σ_{i>k} λᵢ²`.
    #[serde(rename = "R_k")]
    pub big_r: Vec<f64>,
    /// Smallest `k` with `r_k ≥ b n`; `None` when no `k` qualifies.
    pub k_star: Option<usize>,
    pub b_const: f64,
    pub n: usize,
}

impl EffectiveRankReport {
    /// `R_{k*}`, when `k*` exists.
    pub fn big_r_at_k_star(&self) -> Option<f64> {
        self.k_star.map(|k| self.big_r[k])
    }

    /// Flat rows `k,r_k,R_k`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), RiskError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "r_k", "R_k"])?;
        for (k, (r, big)) in self.r.iter().zip(&self.big_r).enumerate() {
            out.write_record([k.to_string(), r.to_string(), big.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Tail sums are accumulated from the smallest eigenvalue upward.
pub fn effective_ranks(eigs: &[f64], n: usize, b: f64) -> Result<EffectiveRankReport, RiskError> {
    if eigs.is_empty() {
        return Err(RiskError::InvalidArgument("empty spectrum".into()));
    }
    if let Some(bad) = eigs.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(RiskError::InvalidArgument(format!("eigenvalues must be positive, got {bad}")));
    }
    if eigs.windows(2).any(|w| w[1] > w[0]) {
        return Err(RiskError::InvalidArgument("eigenvalues must be sorted descending".into()));
    }
    if !(b > 1.0 && b.is_finite()) {
        return Err(RiskError::InvalidArgument(format!("b must exceed 1, got {b}")));
    }
    let d = eigs.len();
    let mut tail = vec![0.0; d];
    let mut tail_sq = vec![0.0; d];
    let (mut s, mut s2) = (0.0, 0.0);
    for k in (0..d).rev() {
        s += eigs[k];
        s2 += eigs[k] * eigs[k];
        tail[k] = s;
        tail_sq[k] = s2;
    }
    let r: Vec<f64> = (0..d).map(|k| tail[k] / eigs[k]).collect();
    let big_r: Vec<f64> = (0..d).map(|k| tail[k] * tail[k] / tail_sq[k]).collect();
    let threshold = b * n as f64;
    let k_star = r.iter().position(|&rk| rk >= threshold);
    Ok(EffectiveRankReport { r, big_r, k_star, b_const: b, n })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotropic_ranks_count_the_tail() {
        let rep = effective_ranks(&[1.0; 5], 1, 2.0).unwrap();
        for k in 0..5 {
            assert!((rep.r[k] - (5 - k) as f64).abs() < 1e-15);
            assert!((rep.big_r[k] - (5 - k) as f64).abs() < 1e-12);
        }
        assert_eq!(rep.k_star, Some(0));
    }

    #[test]
    fn hand_computed_example() {
        let rep = effective_ranks(&[4.0, 2.0, 1.0, 1.0], 1, 2.0).unwrap();
        assert!((rep.r[1] - 2.0).abs() < 1e-15);
        assert!((rep.big_r[1] - 16.0 / 6.0).abs() < 1e-15);
        assert!((rep.r[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn k_star_sentinel_and_isotropic_thousand() {
        let rep = effective_ranks(&vec![1.0; 1000], 100, 2.0).unwrap();
        assert_eq!(rep.k_star, Some(0));
        let none = effective_ranks(&[1.0, 0.5], 10, 2.0).unwrap();
        assert_eq!(none.k_star, None);
        assert_eq!(none.big_r_at_k_star(), None);
    }

    #[test]
    fn validation() {
        assert!(effective_ranks(&[], 1, 2.0).is_err());
        assert!(effective_ranks(&[1.0, 2.0], 1, 2.0).is_err());
        assert!(effective_ranks(&[1.0, 0.0], 1, 2.0).is_err());
        assert!(effective_ranks(&[1.0], 1, 1.0).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        effective_ranks(&[2.0, 1.0], 1, 2.0).unwrap().write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "k,r_k,R_k\n0,1.5,1.8\n1,1,1\n");
    }
}
