//! TOML run configuration.
//!
//! Every key of the experiment configuration may appear at the top level;
//! only `d` is required. Three extra keys pick the single cell used by the
//! step-by-step commands (`n1`, `n2`, `ratio_db`, defaulting to the first
//! sample configuration and the first ratio), and four keys are tool options
//! that do not affect results (`out_dir`, `format`, `threads`, `log_level`).

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use rtx_core::harness::ExperimentConfig;
use rtx_core::source_models::TrainMode;
use rtx_core::synth::{db_serde, EigenLaw};
use rtx_core::transfer::Phase2Solver;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub d: usize,
    pub k: Option<usize>,
    pub l: Option<usize>,
    pub q_target: Option<usize>,
    pub m: Option<usize>,
    pub n_s: Option<usize>,
    pub sample_configs: Option<Vec<(usize, usize)>>,
    pub ratios_db: Option<Vec<f64>>,
    pub sigma: Option<f64>,
    pub head_scale: Option<f64>,
    pub tau: Option<f64>,
    pub floor: Option<f64>,
    pub covariance: Option<EigenLaw>,
    pub n_test: Option<usize>,
    pub n_trials: Option<usize>,
    pub base_seed: Option<u64>,
    pub oracle_vstar: Option<bool>,
    pub phase2: Option<Phase2Solver>,
    pub source_mode: Option<TrainMode>,
    pub drop_tol: Option<f64>,

    pub n1: Option<usize>,
    pub n2: Option<usize>,
    pub ratio_db: Option<f64>,

    pub out_dir: Option<PathBuf>,
    pub format: Option<Format>,
    pub threads: Option<usize>,
    pub log_level: Option<String>,
}

/// Values that can be overridden from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub format: Option<Format>,
}

/// Everything that influences the numbers a command produces. Its hash
/// identifies a run.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub experiment: ExperimentConfig,
    pub n1: usize,
    pub n2: usize,
    #[serde(with = "db_serde")]
    pub ratio_db: f64,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub resolved: Resolved,
    pub hash: String,
    pub out_dir: PathBuf,
    pub format: Format,
    pub threads: Option<usize>,
    pub log_level: String,
}

pub const DEFAULT_OUT_DIR: &str = "rtx-out";

pub fn load(path: &Path, overrides: &Overrides) -> Result<Settings, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    parse(&text, overrides).map_err(|e| CliError { message: format!("{}: {}", path.display(), e.message), ..e })
}

pub fn parse(text: &str, overrides: &Overrides) -> Result<Settings, CliError> {
    let raw: CliConfig = toml::from_str(text).map_err(|e| CliError::validation(e.to_string()))?;
    resolve(raw, overrides)
}

fn resolve(raw: CliConfig, overrides: &Overrides) -> Result<Settings, CliError> {
    let base = ExperimentConfig::default();
    let l = raw.l.unwrap_or(base.l.min(raw.d));
    let experiment = ExperimentConfig {
        d: raw.d,
        k: raw.k.unwrap_or(base.k),
        l,
        q_target: raw.q_target.unwrap_or(l),
        m: raw.m.unwrap_or(base.m),
        n_s: raw.n_s.unwrap_or(base.n_s),
        sample_configs: raw.sample_configs.unwrap_or(base.sample_configs),
        ratios_db: raw.ratios_db.unwrap_or(base.ratios_db),
        sigma: raw.sigma.unwrap_or(base.sigma),
        head_scale: raw.head_scale.unwrap_or(base.head_scale),
        tau: raw.tau.unwrap_or(base.tau),
        floor: raw.floor.unwrap_or(base.floor),
        covariance: raw.covariance.or(base.covariance),
        n_test: raw.n_test.unwrap_or(base.n_test),
        n_trials: raw.n_trials.unwrap_or(base.n_trials),
        base_seed: overrides.seed.or(raw.base_seed).unwrap_or(base.base_seed),
        oracle_vstar: raw.oracle_vstar.unwrap_or(base.oracle_vstar),
        phase2: raw.phase2.unwrap_or(base.phase2),
        source_mode: raw.source_mode.unwrap_or(base.source_mode),
        drop_tol: raw.drop_tol.unwrap_or(base.drop_tol),
    };
    experiment.validate()?;

    let first = experiment.sample_configs.first().copied();
    let n1 = raw.n1.or(first.map(|c| c.0));
    let n2 = raw.n2.or(first.map(|c| c.1));
    let (Some(n1), Some(n2)) = (n1, n2) else {
        return Err(CliError::validation("n1 and n2 are needed when sample_configs is empty"));
    };
    if n1 == 0 || n2 == 0 {
        return Err(CliError::validation(format!("n1 and n2 must be at least 1, got n1={n1}, n2={n2}")));
    }
    let Some(ratio_db) = raw.ratio_db.or(experiment.ratios_db.first().copied()) else {
        return Err(CliError::validation("ratio_db is needed when ratios_db is empty"));
    };
    if ratio_db.is_nan() || ratio_db == f64::NEG_INFINITY {
        return Err(CliError::validation(format!("ratio_db must be finite or inf, got {ratio_db}")));
    }

    let threads = overrides.threads.or(raw.threads);
    if threads == Some(0) {
        return Err(CliError::validation("threads must be at least 1"));
    }
    let resolved = Resolved { experiment, n1, n2, ratio_db };
    Ok(Settings {
        hash: config_hash(&resolved)?,
        resolved,
        out_dir: overrides
            .out
            .clone()
            .or(raw.out_dir)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
        format: overrides.format.or(raw.format).unwrap_or_default(),
        threads,
        log_level: raw.log_level.unwrap_or_else(|| "warn".into()),
    })
}

/// SHA-256 of the canonical JSON form, lowercase hex.
pub fn config_hash(resolved: &Resolved) -> Result<String, CliError> {
    let bytes = serde_json::to_vec(resolved)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_ok(text: &str) -> Settings {
        parse(text, &Overrides::default()).unwrap()
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let s = parse_ok("d = 4\n");
        let e = &s.resolved.experiment;
        assert_eq!((e.d, e.l, e.q_target), (4, 4, 4));
        assert_eq!((s.resolved.n1, s.resolved.n2, s.resolved.ratio_db), (100, 100, 50.0));
        assert_eq!(s.hash.len(), 64);
    }

    #[test]
    fn missing_d_is_named() {
        let err = parse("m = 3\n", &Overrides::default()).unwrap_err();
        assert_eq!(err.kind.code(), 1);
        assert!(err.message.contains("`d`"), "{}", err.message);
    }

    #[test]
    fn unknown_key_reports_its_location() {
        let err = parse("d = 4\nbogus = 1\n", &Overrides::default()).unwrap_err();
        assert!(err.message.contains("bogus") && err.message.contains("line 2"), "{}", err.message);
    }

    #[test]
    fn flags_override_keys_and_change_the_hash() {
        let a = parse_ok("d = 4\nbase_seed = 1\n");
        let b = parse("d = 4\nbase_seed = 1\n", &Overrides { seed: Some(2), ..Default::default() }).unwrap();
        assert_eq!(b.resolved.experiment.base_seed, 2);
        assert_ne!(a.hash, b.hash);
        let c = parse_ok("d = 4\nbase_seed = 1\nthreads = 3\nformat = \"json\"\n");
        assert_eq!(a.hash, c.hash);
        assert_eq!(c.format, Format::Json);
    }

    #[test]
    fn nested_tables_and_infinite_ratio() {
        let s = parse_ok(
            "d = 10\nratio_db = inf\n[covariance]\nkind = \"isotropic\"\nscale = 1.0\n[phase2]\nkind = \"closed_form\"\n",
        );
        assert_eq!(s.resolved.ratio_db, f64::INFINITY);
        assert_eq!(s.resolved.experiment.phase2, Phase2Solver::ClosedForm);
        assert!(serde_json::to_string(&s.resolved).unwrap().contains("\"ratio_db\":\"inf\""));
    }

    #[test]
    fn invalid_combinations_are_rejected() {
        assert!(parse("d = 4\nl = 5\n", &Overrides::default()).is_err());
        assert!(parse("d = 4\nthreads = 0\n", &Overrides::default()).is_err());
    }
}
