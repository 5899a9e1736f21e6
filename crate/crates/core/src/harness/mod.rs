//! Seeded experiment sweeps over sample sizes and in-out mixture ratios.

mod config;
mod output;
mod run;

use thiserror::Error;

pub use config::{budgeted_gd, smoke_config, ExperimentConfig};
pub use output::{write_plot_data, write_results_csv, write_trials_csv, RESULTS_HEADER};
pub use run::{
    aggregate, build_world, check_orderings, mean_and_se, run_cell, run_sweep, run_trials,
    trial_seed, CellOutcome, OrderingReport, ResultRow, TrialRecord, World,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Synth(#[from] crate::synth::SynthError),

    #[error(transparent)]
    Source(#[from] crate::source_models::SourceError),

    #[error(transparent)]
    Transfer(#[from] crate::transfer::TransferError),

    #[error(transparent)]
    Risk(#[from] crate::risk::RiskError),

    #[error(transparent)]
    Linalg(#[from] crate::matrixkit::LinalgError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
