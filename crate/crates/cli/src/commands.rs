//! Subcommand bodies. Each reads artifacts from an input directory, writes
//! its outputs and a JSON record under the output directory, and returns
//! the text to print.
//!
//! Layout (input and output default to the same directory):
//!
//! ```text
//! manifest.json                    generate
//! ensemble/                        generate
//! data/{target1,target2,test}.*    generate
//! data/sources/source_NNN.*        generate
//! models/source_NNN.*              train-sources
//! train_sources.json               train-sources
//! phase1/{vhat,what,theta}.rtxm    phase1, plus record.json
//! phase2/theta.rtxm                phase2, plus record.json
//! scratch/theta.rtxm               scratch, plus record.json
//! results.{csv,json}, trials.csv, plot_data.csv, experiment.json
//! diagnose.json, effective_ranks.csv, bounds.csv
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rtx_core::harness::{
    aggregate, build_world, check_orderings, run_trials, trial_seed, write_plot_data, write_results_csv,
    write_trials_csv, OrderingReport, ResultRow,
};
use rtx_core::matrixkit::io::{load_vector, save_matrix, save_vector, write_atomic, FormatError};
use rtx_core::matrixkit::{projection_residual, Vector};
use rtx_core::risk::{
    check_covariance_sandwich, check_projected_sandwich, covariance_dominance, diversity_sigma_l, effective_ranks,
    error_ratio, mse, theorem1_bound, theorem2_bound, BoundInputs, BoundReport, DiversityReport, SandwichReport,
    DEFAULT_B, DEFAULT_DELTA,
};
use rtx_core::source_models::{load_models, save_models, source_excess_energy, train_all_sources};
use rtx_core::synth::{epsilon_of_ensemble, Dataset, EnsembleManifest, RealizedCovariance, TaskEnsemble};
use rtx_core::transfer::{build_dictionary, phase1_fit, phase2, scratch_baseline, Phase2Method};
use serde::Serialize;

use crate::config::{Format, Resolved, Settings};
use crate::error::CliError;

/// Band of the covariance sandwich reported by `diagnose`.
pub const SANDWICH_BAND: (f64, f64) = (0.85, 1.15);

const TARGET1: &str = "target1";
const TARGET2: &str = "target2";
const TEST: &str = "test";

pub struct Paths {
    pub input: PathBuf,
    pub out: PathBuf,
}

impl Paths {
    fn ensemble(&self) -> PathBuf {
        self.input.join("ensemble")
    }

    fn data(&self) -> PathBuf {
        self.input.join("data")
    }

    fn sources(&self) -> PathBuf {
        self.input.join("data").join("sources")
    }
}

fn source_stem(i: usize) -> String {
    format!("source_{i:03}")
}

/// Fails with exit code 3 naming the first missing file.
fn require(files: &[PathBuf]) -> Result<(), CliError> {
    for f in files {
        if !f.is_file() {
            return Err(CliError::io(format!("{}: required input file is missing", f.display())));
        }
    }
    Ok(())
}

fn dataset_files(dir: &Path, stem: &str) -> Vec<PathBuf> {
    ["json", "x.rtxm", "y.rtxm"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .collect()
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_atomic(path, |w| -> Result<(), FormatError> {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::from)?;
        writeln!(w)?;
        Ok(())
    })
    .map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn write_with<F>(path: &Path, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
{
    write_atomic(path, |w| -> Result<(), CliError> { fill(w) })
        .map_err(|e| CliError { message: format!("{}: {}", path.display(), e.message), ..e })
}

fn pretty<T: Serialize>(value: &T) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// Header shared by every record.
#[derive(Debug, Serialize)]
struct Provenance<'a> {
    command: &'a str,
    config_hash: &'a str,
    base_seed: u64,
}

fn provenance<'a>(command: &'a str, s: &'a Settings) -> Provenance<'a> {
    Provenance {
        command,
        config_hash: &s.hash,
        base_seed: s.resolved.experiment.base_seed,
    }
}

/// Excess risk under the target covariance and MSE ratio on the test set.
#[derive(Debug, Serialize)]
struct Evaluation {
    eer: f64,
    test_ratio: f64,
}

fn evaluate(cov: &RealizedCovariance, ens: &TaskEnsemble, test: &Dataset, theta: &Vector) -> Result<Evaluation, CliError> {
    let diff = theta.sub(&ens.theta_target)?;
    Ok(Evaluation {
        eer: cov.quadratic_form(&diff).max(0.0),
        test_ratio: error_ratio(theta, &ens.theta_target, test)?,
    })
}

fn load_world_parts(p: &Paths) -> Result<(TaskEnsemble, RealizedCovariance), CliError> {
    let ens = TaskEnsemble::load(&p.ensemble())?;
    let cov = ens.spec.target_cov.realize()?;
    Ok((ens, cov))
}

fn ensemble_files(p: &Paths) -> Vec<PathBuf> {
    vec![p.ensemble().join("ensemble.json")]
}

#[derive(Debug, Serialize)]
struct GenerateManifest<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    d: usize,
    trial_seed: u64,
    data_seed: u64,
    config: &'a Resolved,
    ensemble: EnsembleManifest,
    datasets: Vec<String>,
}

pub fn generate(s: &Settings, p: &Paths) -> Result<String, CliError> {
    let r = &s.resolved;
    let cfg = &r.experiment;
    let seed = trial_seed(cfg, 0);
    let world = build_world(cfg, (r.n1, r.n2), r.ratio_db, seed)?;
    let sources = world.sample_sources(cfg)?;

    let ens_dir = p.out.join("ensemble");
    let data_dir = p.out.join("data");
    let src_dir = data_dir.join("sources");
    for dir in [&ens_dir, &src_dir] {
        create_dir(dir)?;
    }
    world.ensemble.save(&ens_dir)?;
    let mut datasets = Vec::new();
    for (stem, data) in [(TARGET1, &world.data1), (TARGET2, &world.data2), (TEST, &world.test)] {
        data.save(&data_dir, stem, Some(world.data_seed))?;
        datasets.push(format!("data/{stem}"));
    }
    for (i, data) in sources.iter().enumerate() {
        data.save(&src_dir, &source_stem(i), Some(world.data_seed))?;
        datasets.push(format!("data/sources/{}", source_stem(i)));
    }
    log::info!("wrote ensemble, {} target sets and {} source sets", 3, sources.len());

    let manifest = GenerateManifest {
        provenance: provenance("generate", s),
        d: cfg.d,
        trial_seed: seed,
        data_seed: world.data_seed,
        config: r,
        ensemble: world.ensemble.manifest(),
        datasets,
    };
    write_json(&p.out.join("manifest.json"), &manifest)?;
    pretty(&manifest)
}

#[derive(Debug, Serialize)]
struct SourceSummary {
    index: usize,
    train_mse: f64,
    degenerate: bool,
}

#[derive(Debug, Serialize)]
struct TrainRecord<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    m: usize,
    k: usize,
    degenerate: usize,
    excess_energy: f64,
    sources: Vec<SourceSummary>,
}

pub fn train_sources(s: &Settings, p: &Paths) -> Result<String, CliError> {
    let cfg = &s.resolved.experiment;
    let mut files = ensemble_files(p);
    for i in 0..cfg.m {
        files.extend(dataset_files(&p.sources(), &source_stem(i)));
    }
    require(&files)?;

    let ens = TaskEnsemble::load(&p.ensemble())?;
    let data = (0..cfg.m)
        .map(|i| Dataset::load(&p.sources(), &source_stem(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let models = train_all_sources(&data, cfg.k, cfg.source_mode)?;
    let excess_energy = source_excess_energy(&models, &ens, &data)?;

    let dir = p.out.join("models");
    create_dir(&dir)?;
    save_models(&dir, &models)?;
    let record = TrainRecord {
        provenance: provenance("train-sources", s),
        m: models.len(),
        k: cfg.k,
        degenerate: models.iter().filter(|m| m.degenerate).count(),
        excess_energy,
        sources: models
            .iter()
            .enumerate()
            .map(|(index, m)| SourceSummary { index, train_mse: m.train_mse, degenerate: m.degenerate })
            .collect(),
    };
    write_json(&p.out.join("train_sources.json"), &record)?;
    pretty(&record)
}

#[derive(Debug, Serialize)]
struct Phase1Record<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    dictionary: &'static str,
    q: usize,
    /// Largest distance from a true subspace direction to the dictionary span.
    max_vstar_residual: f64,
    train_mse: f64,
    #[serde(flatten)]
    evaluation: Evaluation,
}

pub fn phase1(s: &Settings, p: &Paths) -> Result<String, CliError> {
    let cfg = &s.resolved.experiment;
    let mut files = ensemble_files(p);
    files.extend(dataset_files(&p.data(), TARGET1));
    files.extend(dataset_files(&p.data(), TEST));
    if !cfg.oracle_vstar {
        files.push(p.input.join("models").join("source_000.json"));
    }
    require(&files)?;

    let (ens, cov) = load_world_parts(p)?;
    let data1 = Dataset::load(&p.data(), TARGET1)?;
    let test = Dataset::load(&p.data(), TEST)?;
    let (vhat, dictionary) = if cfg.oracle_vstar {
        (ens.vstar.clone(), "oracle")
    } else {
        let models = load_models(&p.input.join("models"))?;
        (build_dictionary(&models, cfg.drop_tol)?, "learned")
    };
    let (what, theta) = phase1_fit(&vhat, &data1)?;
    let mut max_vstar_residual = 0.0f64;
    for col in ens.vstar.columns().columns() {
        max_vstar_residual = max_vstar_residual.max(projection_residual(&vhat, &col)?);
    }

    let dir = p.out.join("phase1");
    create_dir(&dir)?;
    save_matrix(&dir.join("vhat.rtxm"), vhat.columns())?;
    save_vector(&dir.join("what.rtxm"), &what)?;
    save_vector(&dir.join("theta.rtxm"), &theta)?;
    let record = Phase1Record {
        provenance: provenance("phase1", s),
        dictionary,
        q: vhat.rank(),
        max_vstar_residual,
        train_mse: mse(&theta, &data1)?,
        evaluation: evaluate(&cov, &ens, &test, &theta)?,
    };
    write_json(&dir.join("record.json"), &record)?;
    pretty(&record)
}

#[derive(Debug, Serialize)]
struct Phase2Record<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    method: Phase2Method,
    notice: Option<String>,
    iters: usize,
    grad_norm: f64,
    converged: bool,
    /// `‖θ − θ₀‖` from the Phase-1 start.
    distance_from_start: f64,
    train_mse: f64,
    #[serde(flatten)]
    evaluation: Evaluation,
}

pub fn phase2_cmd(s: &Settings, p: &Paths) -> Result<String, CliError> {
    let cfg = &s.resolved.experiment;
    let start = p.input.join("phase1").join("theta.rtxm");
    let mut files = ensemble_files(p);
    files.push(start.clone());
    files.extend(dataset_files(&p.data(), TARGET2));
    files.extend(dataset_files(&p.data(), TEST));
    require(&files)?;

    let (ens, cov) = load_world_parts(p)?;
    let theta0 = load_vector(&start)?;
    let data2 = Dataset::load(&p.data(), TARGET2)?;
    let test = Dataset::load(&p.data(), TEST)?;
    let (gd, method) = phase2(&theta0, &data2, &cfg.phase2)?;
    let notice = (method == Phase2Method::OlsFallback).then(|| {
        let msg = format!(
            "n2 = {} exceeds d = {}: no interpolant exists, fitted by least squares instead",
            data2.n(),
            data2.d()
        );
        log::warn!("{msg}");
        msg
    });
    if !gd.converged {
        log::warn!("gradient descent used its {} iteration budget (gradient norm {:.3e})", gd.iters, gd.grad_norm);
    }

    let dir = p.out.join("phase2");
    create_dir(&dir)?;
    save_vector(&dir.join("theta.rtxm"), &gd.theta)?;
    let record = Phase2Record {
        provenance: provenance("phase2", s),
        method,
        notice,
        iters: gd.iters,
        grad_norm: gd.grad_norm,
        converged: gd.converged,
        distance_from_start: gd.theta.sub(&theta0)?.norm(),
        train_mse: mse(&gd.theta, &data2)?,
        evaluation: evaluate(&cov, &ens, &test, &gd.theta)?,
    };
    write_json(&dir.join("record.json"), &record)?;
    pretty(&record)
}

#[derive(Debug, Serialize)]
struct ScratchRecord<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    n: usize,
    d: usize,
    train_mse: f64,
    #[serde(flatten)]
    evaluation: Evaluation,
}

pub fn scratch(s: &Settings, p: &Paths) -> Result<String, CliError> {
    let mut files = ensemble_files(p);
    for stem in [TARGET1, TARGET2, TEST] {
        files.extend(dataset_files(&p.data(), stem));
    }
    require(&files)?;

    let (ens, cov) = load_world_parts(p)?;
    let pooled = Dataset::load(&p.data(), TARGET1)?.concat(&Dataset::load(&p.data(), TARGET2)?)?;
    let test = Dataset::load(&p.data(), TEST)?;
    let theta = scratch_baseline(&pooled)?;

    let dir = p.out.join("scratch");
    create_dir(&dir)?;
    save_vector(&dir.join("theta.rtxm"), &theta)?;
    let record = ScratchRecord {
        provenance: provenance("scratch", s),
        n: pooled.n(),
        d: pooled.d(),
        train_mse: mse(&theta, &pooled)?,
        evaluation: evaluate(&cov, &ens, &test, &theta)?,
    };
    write_json(&dir.join("record.json"), &record)?;
    pretty(&record)
}

#[derive(Debug, Serialize)]
struct ExperimentRecord<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    config: &'a Resolved,
    cells: usize,
    failed_trials: usize,
    unconverged_trials: usize,
    orderings: OrderingReport,
}

pub fn experiment(s: &Settings, p: &Paths) -> Result<String, CliError> {
    let cfg = &s.resolved.experiment;
    create_dir(&p.out)?;
    let records = run_trials(cfg)?;
    let rows = aggregate(cfg, &records);
    let orderings = check_orderings(&rows);
    if !orderings.all_hold() {
        for v in &orderings.violations {
            log::warn!("ordering violated: {v}");
        }
    }

    let table = results_text(&rows, s.format)?;
    let name = match s.format {
        Format::Csv => "results.csv",
        Format::Json => "results.json",
    };
    write_with(&p.out.join(name), |w| Ok(w.write_all(table.as_bytes())?))?;
    write_with(&p.out.join("trials.csv"), |w| Ok(write_trials_csv(&records, w)?))?;
    write_with(&p.out.join("plot_data.csv"), |w| Ok(write_plot_data(&rows, w)?))?;
    let record = ExperimentRecord {
        provenance: provenance("experiment", s),
        config: &s.resolved,
        cells: rows.len(),
        failed_trials: rows.iter().map(|r| r.failed).sum(),
        unconverged_trials: rows.iter().map(|r| r.unconverged).sum(),
        orderings,
    };
    write_json(&p.out.join("experiment.json"), &record)?;
    Ok(table)
}

fn results_text(rows: &[ResultRow], format: Format) -> Result<String, CliError> {
    match format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_results_csv(rows, &mut buf)?;
            String::from_utf8(buf).map_err(|e| CliError::io(e.to_string()))
        }
        Format::Json => pretty(&rows),
    }
}

#[derive(Debug, Serialize)]
struct SandwichSection {
    band: (f64, f64),
    /// `XᵀX/n₁` against `Σ_T`; absent when `n₁ < d` makes it singular.
    full: Option<SandwichReport>,
    /// The same comparison restricted to the true subspace.
    projected: Option<SandwichReport>,
}

#[derive(Debug, Serialize)]
struct DiversitySection {
    #[serde(flatten)]
    report: DiversityReport,
    required: f64,
    holds: bool,
}

#[derive(Debug, Serialize)]
struct RankSection {
    b: f64,
    n: usize,
    k_star: Option<usize>,
    r_0: f64,
    big_r_at_k_star: Option<f64>,
}

#[derive(Debug, Serialize)]
struct DiagnoseReport<'a> {
    #[serde(flatten)]
    provenance: Provenance<'a>,
    artifacts: Option<String>,
    d: usize,
    n1: usize,
    n2: usize,
    sandwich: SandwichSection,
    dominance_r: f64,
    kappa: f64,
    diversity: DiversitySection,
    epsilon: f64,
    effective_ranks: RankSection,
    bounds: Vec<BoundReport>,
}

/// Runs the theory-side checks on saved artifacts when `from_artifacts`,
/// otherwise on a world built from the configuration.
pub fn diagnose(s: &Settings, p: &Paths, from_artifacts: bool) -> Result<String, CliError> {
    let r = &s.resolved;
    let cfg = &r.experiment;
    let (ens, data1, data2) = if from_artifacts {
        let mut files = ensemble_files(p);
        files.extend(dataset_files(&p.data(), TARGET1));
        files.extend(dataset_files(&p.data(), TARGET2));
        require(&files)?;
        (
            TaskEnsemble::load(&p.ensemble())?,
            Dataset::load(&p.data(), TARGET1)?,
            Dataset::load(&p.data(), TARGET2)?,
        )
    } else {
        let w = build_world(cfg, (r.n1, r.n2), r.ratio_db, trial_seed(cfg, 0))?;
        (w.ensemble, w.data1, w.data2)
    };
    create_dir(&p.out)?;
    let d = ens.d();
    let target = ens.spec.target_cov.realize()?;
    let source = ens.spec.source_cov.realize()?;
    let (lo, hi) = SANDWICH_BAND;

    let full = if data1.n() >= d {
        Some(check_covariance_sandwich(&target.matrix(), data1.x(), lo, hi)?)
    } else {
        None
    };
    let projected = if data1.n() >= ens.vstar.rank() {
        Some(check_projected_sandwich(&target.matrix(), data1.x(), &ens.vstar, lo, hi)?)
    } else {
        None
    };

    let dominance_r = if source.is_diagonal() && target.is_diagonal() {
        source
            .eigenvalues()
            .iter()
            .zip(target.eigenvalues())
            .map(|(s, t)| s / t)
            .fold(f64::INFINITY, f64::min)
    } else {
        covariance_dominance(&[source.matrix()], &target.matrix())?
    };
    let all_eigs = source.eigenvalues().iter().chain(target.eigenvalues());
    let (lam_max, lam_min) = all_eigs.fold((0.0f64, f64::INFINITY), |(a, b), &v| (a.max(v), b.min(v)));
    let kappa = lam_max / lam_min;

    let diversity = diversity_sigma_l(&ens.wtilde)?;
    let required = rtx_core::synth::DIVERSITY_CONSTANT * diversity.reference;
    let epsilon = epsilon_of_ensemble(&ens)?;

    let ranks = effective_ranks(target.eigenvalues(), data2.n(), DEFAULT_B)?;
    let inputs = BoundInputs {
        n_s: cfg.n_s,
        n1: data1.n(),
        n2: data2.n(),
        m: ens.m(),
        k: ens.spec.k,
        d,
        q: ens.vstar.rank(),
        sigma: cfg.sigma,
        epsilon,
        r: dominance_r,
        kappa,
        delta: DEFAULT_DELTA,
        b: DEFAULT_B,
        target_eigs: target.eigenvalues().to_vec(),
    };
    let bounds = vec![theorem1_bound(&inputs)?, theorem2_bound(&inputs)?];

    write_with(&p.out.join("effective_ranks.csv"), |w| Ok(ranks.write_csv(w)?))?;
    write_with(&p.out.join("bounds.csv"), |w| Ok(BoundReport::write_csv(&bounds, w)?))?;
    let report = DiagnoseReport {
        provenance: provenance("diagnose", s),
        artifacts: from_artifacts.then(|| p.input.display().to_string()),
        d,
        n1: data1.n(),
        n2: data2.n(),
        sandwich: SandwichSection { band: SANDWICH_BAND, full, projected },
        dominance_r,
        kappa,
        diversity: DiversitySection {
            holds: diversity.sigma_l >= required,
            report: diversity,
            required,
        },
        epsilon,
        effective_ranks: RankSection {
            b: ranks.b_const,
            n: ranks.n,
            k_star: ranks.k_star,
            r_0: ranks.r.first().copied().unwrap_or(0.0),
            big_r_at_k_star: ranks.big_r_at_k_star(),
        },
        bounds,
    };
    write_json(&p.out.join("diagnose.json"), &report)?;
    pretty(&report)
}
