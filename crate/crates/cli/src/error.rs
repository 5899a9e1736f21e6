//! Error type carrying the process exit code.
//!
//! Exit codes: 1 validation, 2 numerical failure, 3 IO or malformed files.

use rtx_core::harness::HarnessError;
use rtx_core::matrixkit::io::FormatError;
use rtx_core::matrixkit::LinalgError;
use rtx_core::risk::RiskError;
use rtx_core::source_models::SourceError;
use rtx_core::synth::SynthError;
use rtx_core::transfer::TransferError;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Validation,
    Numerical,
    Io,
}

impl ExitKind {
    pub fn code(self) -> u8 {
        match self {
            ExitKind::Validation => 1,
            ExitKind::Numerical => 2,
            ExitKind::Io => 3,
        }
    }
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self { kind: ExitKind::Validation, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { kind: ExitKind::Io, message: message.into() }
    }
}

/// Maps a library error onto the exit-code contract.
pub trait Classify: std::fmt::Display {
    fn kind(&self) -> ExitKind;
}

impl<E: Classify> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError { kind: e.kind(), message: e.to_string() }
    }
}

impl Classify for LinalgError {
    fn kind(&self) -> ExitKind {
        match self {
            LinalgError::DimensionMismatch { .. } | LinalgError::Empty { .. } | LinalgError::InvalidArgument(_) => {
                ExitKind::Validation
            }
            _ => ExitKind::Numerical,
        }
    }
}

impl Classify for FormatError {
    fn kind(&self) -> ExitKind {
        ExitKind::Io
    }
}

impl Classify for std::io::Error {
    fn kind(&self) -> ExitKind {
        ExitKind::Io
    }
}

impl Classify for serde_json::Error {
    fn kind(&self) -> ExitKind {
        ExitKind::Io
    }
}

impl Classify for SynthError {
    fn kind(&self) -> ExitKind {
        match self {
            SynthError::InvalidCovariance(_) | SynthError::InvalidParameters(_) => ExitKind::Validation,
            SynthError::DiversityUnreachable { .. } => ExitKind::Numerical,
            SynthError::Linalg(e) => e.kind(),
            _ => ExitKind::Io,
        }
    }
}

impl Classify for SourceError {
    fn kind(&self) -> ExitKind {
        match self {
            SourceError::InvalidArgument(_) | SourceError::LengthMismatch { .. } => ExitKind::Validation,
            SourceError::Linalg(e) => e.kind(),
            SourceError::Synth(e) => e.kind(),
            SourceError::Format(_) | SourceError::Manifest(_) | SourceError::Io(_) => ExitKind::Io,
        }
    }
}

impl Classify for TransferError {
    fn kind(&self) -> ExitKind {
        match self {
            TransferError::InvalidArgument(_) | TransferError::NotOverparameterized { .. } => ExitKind::Validation,
            TransferError::Diverged { .. } | TransferError::NotConverged(_) => ExitKind::Numerical,
            TransferError::Linalg(e) => e.kind(),
        }
    }
}

impl Classify for RiskError {
    fn kind(&self) -> ExitKind {
        match self {
            RiskError::InvalidArgument(_) => ExitKind::Validation,
            RiskError::Linalg(e) => e.kind(),
            RiskError::Csv(_) | RiskError::Io(_) => ExitKind::Io,
        }
    }
}

impl Classify for HarnessError {
    fn kind(&self) -> ExitKind {
        match self {
            HarnessError::InvalidConfig(_) => ExitKind::Validation,
            HarnessError::Synth(e) => e.kind(),
            HarnessError::Source(e) => e.kind(),
            HarnessError::Transfer(e) => e.kind(),
            HarnessError::Risk(e) => e.kind(),
            HarnessError::Linalg(e) => e.kind(),
            HarnessError::Csv(_) | HarnessError::Io(_) => ExitKind::Io,
        }
    }
}
