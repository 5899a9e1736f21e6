//! Ground-truth multi-task worlds: a shared subspace, source models inside
//! it, and a target model that may leak out of it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::covariance::CovarianceSpec;
use super::seed::{normal_matrix, normal_vec, stream_rng};
use super::{db_serde, read_json, SynthError};
use crate::matrixkit::{
    io, orthonormalize, singular_values, Matrix, OrthonormalBasis, Vector, DEFAULT_DROP_TOL,
};

const STREAM_VSTAR: u64 = 1;
const STREAM_WTILDE: u64 = 2;
const STREAM_COMPLETION: u64 = 3;
const STREAM_TARGET_IN: u64 = 4;
const STREAM_TARGET_OUT: u64 = 5;

/// Safety factor on the diversity requirement `σ_l(W̃) ≥ c·√(m/l)`.
pub const DIVERSITY_CONSTANT: f64 = 0.5;
pub const DIVERSITY_RETRIES: usize = 100;

/// Inputs to [`build_task_ensemble`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub d: usize,
    pub k: usize,
    pub l: usize,
    pub m: usize,
    /// `10·log₁₀(E‖u‖² / E‖v‖²)`; `inf` puts the target inside the subspace.
    #[serde(with = "db_serde")]
    pub in_out_ratio_db: f64,
    pub sigma: f64,
    /// Standard deviation of each target coordinate inside the subspace.
    pub head_scale: f64,
    pub source_cov: CovarianceSpec,
    pub target_cov: CovarianceSpec,
    pub seed: u64,
}

impl EnsembleSpec {
    /// Isotropic covariances, a target inside the subspace, no noise.
    pub fn new(d: usize, k: usize, l: usize, m: usize) -> Result<Self, SynthError> {
        let cov = CovarianceSpec::isotropic(d.max(1), 1.0)?;
        Ok(Self {
            d,
            k,
            l,
            m,
            in_out_ratio_db: f64::INFINITY,
            sigma: 0.0,
            head_scale: 1.0,
            source_cov: cov.clone(),
            target_cov: cov,
            seed: 0,
        })
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |msg: String| Err(SynthError::InvalidParameters(msg));
        let (d, k, l, m) = (self.d, self.k, self.l, self.m);
        if d == 0 || k == 0 || m == 0 {
            return bad(format!("d, k, m must be positive (d={d}, k={k}, m={m})"));
        }
        if !(k <= l && l <= d.min(m * k)) {
            return bad(format!("need k <= l <= min(d, m*k), got k={k}, l={l}, d={d}, m={m}"));
        }
        if self.in_out_ratio_db.is_nan() || self.in_out_ratio_db == f64::NEG_INFINITY {
            return bad(format!("in-out ratio must be finite or +inf, got {}", self.in_out_ratio_db));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be non-negative, got {}", self.sigma));
        }
        if !(self.head_scale > 0.0 && self.head_scale.is_finite()) {
            return bad(format!("head_scale must be positive, got {}", self.head_scale));
        }
        for (name, cov) in [("source", &self.source_cov), ("target", &self.target_cov)] {
            cov.validate()?;
            if cov.dim != d {
                return bad(format!("{name} covariance has dimension {}, expected {d}", cov.dim));
            }
        }
        Ok(())
    }

    /// Per-coordinate variance of the out-of-subspace target component.
    pub fn out_of_span_variance(&self) -> f64 {
        if self.in_out_ratio_db == f64::INFINITY {
            return 0.0;
        }
        let expected_in = self.l as f64 * self.head_scale.powi(2);
        expected_in / (self.d as f64 * 10f64.powf(self.in_out_ratio_db / 10.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceHead {
    /// `d x k`, orthonormal columns inside `span(V*)`.
    pub bstar: Matrix,
    pub wstar: Vector,
    pub wtilde: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskEnsemble {
    pub spec: EnsembleSpec,
    pub vstar: OrthonormalBasis,
    pub source_heads: Vec<SourceHead>,
    /// `l x m`, column `i` is `w̃_i`.
    pub wtilde: Matrix,
    pub theta_target: Vector,
    /// In-span component `u`.
    pub theta_in: Vector,
    /// Out-of-span component `v`.
    pub theta_out: Vector,
}

impl TaskEnsemble {
    pub fn d(&self) -> usize {
        self.spec.d
    }

    pub fn m(&self) -> usize {
        self.spec.m
    }

    /// `θ_i* = V* w̃_i`.
    pub fn source_theta(&self, i: usize) -> Vector {
        self.vstar
            .combine(&self.source_heads[i].wtilde)
            .expect("ensemble dimensions are consistent")
    }

    /// Largest `|V* w̃_i - B_i* w_i*|` over all sources.
    pub fn consistency_error(&self) -> f64 {
        self.source_heads
            .iter()
            .enumerate()
            .map(|(i, h)| {
                let b = h.bstar.matvec(&h.wstar).expect("consistent");
                self.source_theta(i).max_abs_diff(&b)
            })
            .fold(0.0, f64::max)
    }

    /// Realized `10·log₁₀(‖u‖² / ‖v‖²)`.
    pub fn realized_ratio_db(&self) -> f64 {
        10.0 * (self.theta_in.norm_squared() / self.theta_out.norm_squared()).log10()
    }

    pub fn manifest(&self) -> EnsembleManifest {
        EnsembleManifest {
            spec: self.spec.clone(),
            out_of_span_variance: self.spec.out_of_span_variance(),
            diversity_sigma_l: smallest_singular_value(&self.wtilde),
        }
    }

    /// Writes the manifest and every matrix as RTXM1 files into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), SynthError> {
        let (d, k, m) = (self.spec.d, self.spec.k, self.spec.m);
        let bstar = Matrix::hstack(&self.source_heads.iter().map(|h| &h.bstar).collect::<Vec<_>>())?;
        let wstar = Matrix::from_fn(k, m, |r, c| self.source_heads[c].wstar[r]);
        debug_assert_eq!(bstar.shape(), (d, m * k));
        io::save_matrix(&dir.join("vstar.rtxm"), self.vstar.columns())?;
        io::save_matrix(&dir.join("wtilde.rtxm"), &self.wtilde)?;
        io::save_matrix(&dir.join("bstar.rtxm"), &bstar)?;
        io::save_matrix(&dir.join("wstar.rtxm"), &wstar)?;
        io::save_vector(&dir.join("theta_target.rtxm"), &self.theta_target)?;
        io::save_vector(&dir.join("theta_in.rtxm"), &self.theta_in)?;
        io::save_vector(&dir.join("theta_out.rtxm"), &self.theta_out)?;
        let manifest = self.manifest();
        io::write_atomic(&dir.join("ensemble.json"), |w| {
            serde_json::to_writer_pretty(&mut *w, &manifest).map_err(std::io::Error::from)
        })?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<TaskEnsemble, SynthError> {
        let manifest: EnsembleManifest = read_json(&dir.join("ensemble.json"))?;
        let spec = manifest.spec;
        spec.validate()?;
        let (d, k, l, m) = (spec.d, spec.k, spec.l, spec.m);
        let vstar = OrthonormalBasis::from_orthonormal(io::load_matrix(&dir.join("vstar.rtxm"))?)?;
        let wtilde = io::load_matrix(&dir.join("wtilde.rtxm"))?;
        let bstar = io::load_matrix(&dir.join("bstar.rtxm"))?;
        let wstar = io::load_matrix(&dir.join("wstar.rtxm"))?;
        let expect = |name: &str, got: (usize, usize), want: (usize, usize)| {
            if got == want {
                Ok(())
            } else {
                Err(SynthError::InvalidParameters(format!(
                    "{name} has shape {got:?}, manifest implies {want:?}"
                )))
            }
        };
        expect("vstar", vstar.columns().shape(), (d, l))?;
        expect("wtilde", wtilde.shape(), (l, m))?;
        expect("bstar", bstar.shape(), (d, m * k))?;
        expect("wstar", wstar.shape(), (k, m))?;
        let source_heads = (0..m)
            .map(|i| SourceHead {
                bstar: Matrix::from_fn(d, k, |r, c| bstar[(r, i * k + c)]),
                wstar: wstar.column(i),
                wtilde: wtilde.column(i),
            })
            .collect();
        let ens = TaskEnsemble {
            spec,
            vstar,
            source_heads,
            wtilde,
            theta_target: io::load_vector(&dir.join("theta_target.rtxm"))?,
            theta_in: io::load_vector(&dir.join("theta_in.rtxm"))?,
            theta_out: io::load_vector(&dir.join("theta_out.rtxm"))?,
        };
        for (name, v) in [
            ("theta_target", &ens.theta_target),
            ("theta_in", &ens.theta_in),
            ("theta_out", &ens.theta_out),
        ] {
            expect(name, (v.dim(), 1), (d, 1))?;
        }
        Ok(ens)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleManifest {
    pub spec: EnsembleSpec,
    pub out_of_span_variance: f64,
    pub diversity_sigma_l: f64,
}

fn smallest_singular_value(w: &Matrix) -> f64 {
    let l = w.rows();
    if w.cols() < l {
        return 0.0;
    }
    singular_values(w)
        .map(|s| s.as_slice().get(l - 1).copied().unwrap_or(0.0))
        .unwrap_or(0.0)
}

/// Builds a world satisfying the subspace, diversity and mixture-ratio
/// recipe described on [`EnsembleSpec`].
pub fn build_task_ensemble(spec: &EnsembleSpec) -> Result<TaskEnsemble, SynthError> {
    spec.validate()?;
    let (d, k, l, m) = (spec.d, spec.k, spec.l, spec.m);
    let seed = spec.seed;

    let vstar = orthonormalize(&normal_matrix(&mut stream_rng(seed, STREAM_VSTAR), d, l), DEFAULT_DROP_TOL)?;
    if vstar.rank() != l {
        return Err(SynthError::InvalidParameters(format!(
            "subspace draw lost rank ({} < {l})",
            vstar.rank()
        )));
    }

    let required = DIVERSITY_CONSTANT * (m as f64 / l as f64).sqrt();
    let mut rng = stream_rng(seed, STREAM_WTILDE);
    let mut best = 0.0f64;
    let mut wtilde = None;
    for _ in 0..DIVERSITY_RETRIES {
        let w = normal_matrix(&mut rng, l, m);
        let s = smallest_singular_value(&w);
        if s >= required {
            wtilde = Some(w);
            break;
        }
        best = best.max(s);
    }
    let wtilde = wtilde.ok_or(SynthError::DiversityUnreachable {
        attempts: DIVERSITY_RETRIES,
        best,
        required,
    })?;

    let mut completion = stream_rng(seed, STREAM_COMPLETION);
    let source_heads = (0..m)
        .map(|i| {
            let wt = wtilde.column(i);
            // k-dim subspace of R^l containing w̃_i, lifted through V*
            let mut cols = vec![wt.as_slice().to_vec()];
            cols.extend((1..k).map(|_| normal_vec(&mut completion, l)));
            let c = orthonormalize(&Matrix::from_columns(&cols)?, DEFAULT_DROP_TOL)?;
            let bstar = vstar.columns().matmul(c.columns())?;
            let wstar = c.coordinates(&wt)?;
            Ok(SourceHead { bstar, wstar, wtilde: wt })
        })
        .collect::<Result<Vec<_>, SynthError>>()?;

    let coords: Vec<f64> = normal_vec(&mut stream_rng(seed, STREAM_TARGET_IN), l)
        .into_iter()
        .map(|c| c * spec.head_scale)
        .collect();
    let theta_in = vstar.combine(&coords)?;
    let sd_out = spec.out_of_span_variance().sqrt();
    let theta_out = Vector::new(
        normal_vec(&mut stream_rng(seed, STREAM_TARGET_OUT), d)
            .into_iter()
            .map(|g| g * sd_out)
            .collect(),
    )?;
    let theta_target = theta_in.add(&theta_out)?;

    Ok(TaskEnsemble {
        spec: spec.clone(),
        vstar,
        source_heads,
        wtilde,
        theta_target,
        theta_in,
        theta_out,
    })
}

/// `‖Σ_T^{1/2}(θ_T* − V* V*ᵀ θ_T*)‖₂`: the target's distance from the
/// shared subspace measured in the target geometry.
///
/// Since `u` lies in the subspace, the residual is taken from `v` alone; an
/// in-span target therefore reports exactly zero.
pub fn epsilon_of_ensemble(ens: &TaskEnsemble) -> Result<f64, SynthError> {
    let residual = ens.vstar.complement(&ens.theta_out)?;
    let cov = ens.spec.target_cov.realize()?;
    Ok(cov.quadratic_form(&residual).max(0.0).sqrt())
}
