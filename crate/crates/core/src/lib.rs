//! Representation transfer for linear regression: synthetic multi-task
//! worlds, low-rank source training, two-phase target fitting, risk
//! diagnostics, and the experiment harness that ties them together.

pub mod matrixkit;
pub mod synth;
pub mod source_models;
pub mod transfer;
pub mod risk;
pub mod harness;
