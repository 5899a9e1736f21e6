//! Sample matrices paired with responses.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::covariance::{CovarianceSpec, RealizedCovariance};
use super::seed::{normal_vec, stream_rng};
use super::SynthError;
use crate::matrixkit::{io, LinalgError, Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    y: Vector,
    generating_theta: Option<Vector>,
    sigma_noise: f64,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vector, sigma_noise: f64) -> Result<Self, SynthError> {
        if x.rows() != y.dim() {
            return Err(LinalgError::DimensionMismatch {
                op: "Dataset::new",
                expected: format!("{} responses", x.rows()),
                got: y.dim().to_string(),
            }
            .into());
        }
        if !(sigma_noise >= 0.0 && sigma_noise.is_finite()) {
            return Err(SynthError::InvalidParameters(format!(
                "noise level must be non-negative, got {sigma_noise}"
            )));
        }
        Ok(Self {
            x,
            y,
            generating_theta: None,
            sigma_noise,
        })
    }

    pub fn with_generating_theta(mut self, theta: Vector) -> Result<Self, SynthError> {
        if theta.dim() != self.d() {
            return Err(LinalgError::DimensionMismatch {
                op: "Dataset::with_generating_theta",
                expected: self.d().to_string(),
                got: theta.dim().to_string(),
            }
            .into());
        }
        self.generating_theta = Some(theta);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &Vector {
        &self.y
    }

    pub fn generating_theta(&self) -> Option<&Vector> {
        self.generating_theta.as_ref()
    }

    pub fn sigma_noise(&self) -> f64 {
        self.sigma_noise
    }

    /// The first `n` samples.
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.n());
        Dataset {
            x: self.x.head_rows(n),
            y: Vector::from_raw(self.y[..n].to_vec()),
            generating_theta: self.generating_theta.clone(),
            sigma_noise: self.sigma_noise,
        }
    }

    /// Stack two samples. The generating model survives only if both agree.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset, SynthError> {
        let x = Matrix::vstack(&[&self.x, &other.x])?;
        let theta = match (&self.generating_theta, &other.generating_theta) {
            (Some(a), Some(b)) if a == b => Some(a.clone()),
            _ => None,
        };
        Ok(Dataset {
            x,
            y: self.y.concat(&other.y),
            generating_theta: theta,
            sigma_noise: self.sigma_noise.max(other.sigma_noise),
        })
    }

    /// Sample variance of `y - Xθ` against the nominal `σ²`. `None` without a
    /// generating model or with fewer than 100 samples.
    pub fn noise_check(&self) -> Option<NoiseCheck> {
        let theta = self.generating_theta.as_ref()?;
        let n = self.n();
        if n < 100 {
            return None;
        }
        let fitted = self.x.matvec(theta).ok()?;
        let resid: Vec<f64> = self.y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
        let mean = resid.iter().sum::<f64>() / n as f64;
        let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let target = self.sigma_noise.powi(2);
        Some(NoiseCheck {
            sample_variance: var,
            nominal_variance: target,
            standard_error: target * (2.0 / (n - 1) as f64).sqrt(),
        })
    }

    /// Writes `<stem>.x.rtxm`, `<stem>.y.rtxm`, optionally `<stem>.theta.rtxm`,
    /// and `<stem>.json`.
    pub fn save(&self, dir: &Path, stem: &str, seed: Option<u64>) -> Result<(), SynthError> {
        io::save_matrix(&dir.join(format!("{stem}.x.rtxm")), &self.x)?;
        io::save_vector(&dir.join(format!("{stem}.y.rtxm")), &self.y)?;
        if let Some(t) = &self.generating_theta {
            io::save_vector(&dir.join(format!("{stem}.theta.rtxm")), t)?;
        }
        let manifest = DatasetManifest {
            n: self.n(),
            d: self.d(),
            sigma_noise: self.sigma_noise,
            has_generating_theta: self.generating_theta.is_some(),
            seed,
        };
        io::write_atomic(&dir.join(format!("{stem}.json")), |w| {
            serde_json::to_writer_pretty(&mut *w, &manifest).map_err(std::io::Error::from)
        })?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Dataset, SynthError> {
        let manifest: DatasetManifest = super::read_json(&dir.join(format!("{stem}.json")))?;
        let x = io::load_matrix(&dir.join(format!("{stem}.x.rtxm")))?;
        let y = io::load_vector(&dir.join(format!("{stem}.y.rtxm")))?;
        let mut data = Dataset::new(x, y, manifest.sigma_noise)?;
        if manifest.has_generating_theta {
            data = data.with_generating_theta(io::load_vector(
                &dir.join(format!("{stem}.theta.rtxm")),
            )?)?;
        }
        Ok(data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCheck {
    pub sample_variance: f64,
    pub nominal_variance: f64,
    pub standard_error: f64,
}

impl NoiseCheck {
    pub fn within(&self, standard_errors: f64) -> bool {
        if self.nominal_variance == 0.0 {
            return self.sample_variance <= 1e-20;
        }
        (self.sample_variance - self.nominal_variance).abs() <= standard_errors * self.standard_error
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub n: usize,
    pub d: usize,
    pub sigma_noise: f64,
    pub has_generating_theta: bool,
    pub seed: Option<u64>,
}

/// Draws i.i.d. `N(0, Σ)` rows with `y = Xθ + z`, `z ~ N(0, σ²)`.
///
/// Each sample consumes `d + 1` normals in order (features, then noise), so
/// the first `r` samples of a draw of size `n` coincide with a draw of size
/// `r` from the same seed.
pub fn sample_gaussian_dataset(
    cov: &CovarianceSpec,
    theta: &Vector,
    n: usize,
    sigma: f64,
    seed: u64,
) -> Result<Dataset, SynthError> {
    let realized = cov.realize()?;
    sample_with(&realized, theta, n, sigma, seed, 0)
}

/// As [`sample_gaussian_dataset`] but with a pre-realized covariance and an
/// explicit stream index.
pub fn sample_with(
    cov: &RealizedCovariance,
    theta: &Vector,
    n: usize,
    sigma: f64,
    seed: u64,
    stream: u64,
) -> Result<Dataset, SynthError> {
    let d = cov.dim();
    if theta.dim() != d {
        return Err(LinalgError::DimensionMismatch {
            op: "sample_gaussian_dataset",
            expected: d.to_string(),
            got: theta.dim().to_string(),
        }
        .into());
    }
    if n == 0 {
        return Err(SynthError::InvalidParameters("sample size must be at least 1".into()));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(SynthError::InvalidParameters(format!(
            "noise level must be non-negative, got {sigma}"
        )));
    }
    let mut rng = stream_rng(seed, stream);
    let mut z = Vec::with_capacity(n * d);
    let mut noise = Vec::with_capacity(n);
    for _ in 0..n {
        z.extend(normal_vec(&mut rng, d));
        noise.push(normal_vec(&mut rng, 1)[0]);
    }
    let x = cov.color_rows(&Matrix::new(n, d, z)?);
    let mut y = x.matvec(theta)?.into_inner();
    for (yi, e) in y.iter_mut().zip(&noise) {
        *yi += sigma * e;
    }
    Dataset::new(x, Vector::new(y)?, sigma)?.with_generating_theta(theta.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iso(d: usize) -> CovarianceSpec {
        CovarianceSpec::isotropic(d, 1.0).unwrap()
    }

    #[test]
    fn noiseless_is_exact() {
        let theta = Vector::new(vec![1.0, -2.0, 0.5]).unwrap();
        let data = sample_gaussian_dataset(&iso(3), &theta, 20, 0.0, 4).unwrap();
        let fitted = data.x().matvec(&theta).unwrap();
        assert_eq!(fitted.as_slice(), data.y().as_slice());
    }

    #[test]
    fn response_variance_at_ten_thousand_samples() {
        let data = sample_gaussian_dataset(&iso(2), &Vector::zeros(2), 10_000, 1.0, 11).unwrap();
        let y = data.y();
        let mean = y.iter().sum::<f64>() / y.dim() as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.dim() - 1) as f64;
        assert!((0.94..=1.06).contains(&var), "variance {var}");
        assert!(data.noise_check().unwrap().within(3.0));
    }

    #[test]
    fn deterministic_and_prefix_stable() {
        let theta = Vector::new(vec![0.3; 4]).unwrap();
        let cov = CovarianceSpec::exponential_decay(4, 1.0, 1e-4).unwrap();
        let a = sample_gaussian_dataset(&cov, &theta, 30, 0.1, 5).unwrap();
        let b = sample_gaussian_dataset(&cov, &theta, 30, 0.1, 5).unwrap();
        assert_eq!(a, b);
        let c = sample_gaussian_dataset(&cov, &theta, 12, 0.1, 5).unwrap();
        assert_eq!(a.head(12), c);
    }

    #[test]
    fn concat_and_validation() {
        let theta = Vector::new(vec![1.0, 1.0]).unwrap();
        let a = sample_gaussian_dataset(&iso(2), &theta, 3, 0.1, 1).unwrap();
        let b = sample_gaussian_dataset(&iso(2), &theta, 4, 0.1, 2).unwrap();
        let ab = a.concat(&b).unwrap();
        assert_eq!(ab.n(), 7);
        assert_eq!(ab.generating_theta(), Some(&theta));
        assert!(sample_gaussian_dataset(&iso(3), &theta, 3, 0.1, 1).is_err());
        assert!(sample_gaussian_dataset(&iso(2), &theta, 0, 0.1, 1).is_err());
        assert!(Dataset::new(Matrix::identity(2), Vector::zeros(3), 0.0).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let theta = Vector::new(vec![1.0, 2.0]).unwrap();
        let a = sample_gaussian_dataset(&iso(2), &theta, 5, 0.2, 1).unwrap();
        a.save(dir.path(), "target", Some(1)).unwrap();
        assert_eq!(Dataset::load(dir.path(), "target").unwrap(), a);
    }
}
