//! Synthetic worlds and datasets: covariance recipes, Gaussian samplers,
//! and task ensembles that share a low-dimensional representation.

mod covariance;
mod dataset;
mod ensemble;
pub mod seed;

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::matrixkit::io::FormatError;
use crate::matrixkit::LinalgError;

pub use covariance::{realize_covariance, CovarianceSpec, EigenLaw, RealizedCovariance, Rotation};
pub use dataset::{sample_gaussian_dataset, sample_with, Dataset, DatasetManifest, NoiseCheck};
pub use ensemble::{
    build_task_ensemble, epsilon_of_ensemble, EnsembleManifest, EnsembleSpec, SourceHead,
    TaskEnsemble, DIVERSITY_CONSTANT, DIVERSITY_RETRIES,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error(
        "diversity condition not met after {attempts} draws \
         (best smallest singular value {best:.4}, required {required:.4})"
    )]
    DiversityUnreachable {
        attempts: usize,
        best: f64,
        required: f64,
    },

    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),

    #[error("{}: {source}", .path.display())]
    ManifestFile {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, SynthError> {
    let file = File::open(path).map_err(|e| FormatError::at(path, e.into()))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| SynthError::ManifestFile {
        path: path.to_path_buf(),
        source,
    })
}

/// JSON has no infinity; `+inf` decibels round-trip as the string `"inf"`.
pub mod db_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            "inf".serialize(s)
        } else {
            v.serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if matches!(t.as_str(), "inf" | "+inf" | "infinity") => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("not a decibel value: {t:?}"))),
        }
    }

    /// The same encoding for a list.
    pub mod seq {
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        #[derive(Serialize, Deserialize)]
        struct Db(#[serde(with = "super")] f64);

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            s.collect_seq(v.iter().map(|&x| Db(x)))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Ok(Vec::<Db>::deserialize(d)?.into_iter().map(|Db(x)| x).collect())
        }
    }
}
