//! Acceptance criteria, run sequentially so the runtime limits are measured
//! without interference. Prints one `PASS`/`FAIL` line per criterion and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rtx_core::harness::{check_orderings, run_sweep, smoke_config, write_results_csv, ExperimentConfig, ResultRow};
use rtx_core::matrixkit::{min_norm_interpolant, projection_residual, Vector, DEFAULT_DROP_TOL};
use rtx_core::risk::{check_covariance_sandwich, effective_ranks, excess_risk, theorem1_bound, BoundInputs};
use rtx_core::source_models::{train_all_sources, TrainMode};
use rtx_core::synth::seed::{normal_matrix, normal_vec, stream_rng};
use rtx_core::synth::{
    build_task_ensemble, sample_gaussian_dataset, sample_with, CovarianceSpec, Dataset, EnsembleSpec, Rotation,
};
use rtx_core::transfer::{
    build_dictionary, phase1_fit, phase2, phase2_closed_form, phase2_finetune_gd, GdConfig, Phase2Solver,
};

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, pass, detail }
}

fn within(v: f64, lo: f64, hi: f64) -> bool {
    lo <= v && v <= hi
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

fn cell(rows: &[ResultRow], n1: usize, n2: usize, ratio: f64) -> &ResultRow {
    rows.iter()
        .find(|r| r.n1 == n1 && r.n2 == n2 && r.ratio_db == ratio)
        .expect("cell present in the sweep")
}

fn gaussian_instance(seed: u64, n: usize, d: usize) -> (Dataset, Vector) {
    let mut rng = stream_rng(seed, 0);
    let x = normal_matrix(&mut rng, n, d);
    let y = Vector::new(normal_vec(&mut rng, n)).unwrap();
    let theta0 = Vector::new(normal_vec(&mut rng, d)).unwrap();
    (Dataset::new(x, y, 0.0).unwrap(), theta0)
}

fn criterion_1() -> Vec<Outcome> {
    let config = ExperimentConfig::default();
    let (rows, secs) = timed(|| run_sweep(&config).expect("full sweep"));
    let mut out = Vec::new();

    let a = cell(&rows, 100, 100, 50.0);
    out.push(outcome(
        "1(a)",
        within(a.phase1_mean, 1.0, 1.3) && within(a.phase2_mean, 1.0, 1.3) && a.scratch_mean >= 5.0,
        format!(
            "cell (100,100,50 dB): phase1 {:.4}, phase2 {:.4} (need [1.0, 1.3]); scratch {:.4} (need >= 5)",
            a.phase1_mean, a.phase2_mean, a.scratch_mean
        ),
    ));
    let b = cell(&rows, 1000, 1000, 1.0);
    out.push(outcome(
        "1(b)",
        within(b.scratch_mean, 1.0, 1.5) && within(b.phase2_mean, 1.0, 1.5) && b.phase1_mean >= 8.0,
        format!(
            "cell (1000,1000,1 dB): scratch {:.4}, phase2 {:.4} (need [1.0, 1.5]); phase1 {:.4} (need >= 8); \
             {} of {} trials hit the descent budget",
            b.scratch_mean, b.phase2_mean, b.phase1_mean, b.unconverged, b.trials
        ),
    ));
    let orderings = check_orderings(&rows);
    out.push(outcome(
        "1(c)",
        orderings.all_hold() && rows.len() == 20 && secs <= 900.0,
        format!(
            "{} rows, orderings hold: {} {:?}; full sweep {secs:.1} s (limit 900 s)",
            rows.len(),
            orderings.all_hold(),
            orderings.violations
        ),
    ));

    let smoke = smoke_config();
    let (rows, secs) = timed(|| run_sweep(&smoke).expect("smoke sweep"));
    let orderings = check_orderings(&rows);
    out.push(outcome(
        "1(smoke)",
        orderings.all_hold() && secs <= 30.0,
        format!(
            "d={}, q={}, {} trials: orderings hold: {} {:?}; {secs:.2} s (limit 30 s)",
            smoke.d,
            smoke.q_target,
            smoke.n_trials,
            orderings.all_hold(),
            orderings.violations
        ),
    ));
    out
}

fn criterion_2() -> Outcome {
    let ((worst, all_ok), secs) = timed(|| {
        let mut rng = stream_rng(2, 0);
        let mut worst = 0.0f64;
        let mut all_ok = true;
        for i in 0..50 {
            let d = rng.random_range(2..=200);
            let n = rng.random_range(1..=d / 2);
            let (data, theta0) = gaussian_instance(1000 + i, n, d);
            let closed = phase2_closed_form(&theta0, &data).unwrap();
            let gd = phase2_finetune_gd(&theta0, &data, &GdConfig::default()).unwrap();
            let rel = gd.theta.sub(&closed).unwrap().norm() / (1.0 + closed.norm());
            worst = worst.max(rel);
            all_ok &= gd.converged && rel <= 1e-8;
        }
        (worst, all_ok)
    });
    outcome(
        "2",
        all_ok && secs <= 5.0,
        format!("50 instances, worst |gd - closed| / (1 + |closed|) = {worst:.3e} (limit 1e-8); {secs:.2} s (limit 5 s)"),
    )
}

fn criterion_3() -> Outcome {
    let ((violations, min_gap), secs) = timed(|| {
        let mut rng = stream_rng(3, 0);
        let mut violations = 0;
        let mut min_gap = f64::INFINITY;
        for i in 0..20 {
            let d = rng.random_range(4..=120);
            let n = rng.random_range(1..=d / 2);
            let (data, theta0) = gaussian_instance(2000 + i, n, d);
            let (fit, _) = phase2(&theta0, &data, &Phase2Solver::default()).unwrap();
            let base = fit.theta.sub(&theta0).unwrap().norm();
            let zeros = vec![0.0; n];
            for _ in 0..100 {
                let z = normal_vec(&mut rng, d);
                let null = min_norm_interpolant(data.x(), &zeros, &z).unwrap();
                let scale = 10f64.powf(rng.random_range(-2.0..1.0));
                let alt = fit.theta.axpy(scale, &null).unwrap();
                let resid = data.x().matvec(&alt).unwrap().sub(data.y()).unwrap().norm();
                assert!(resid <= 1e-8 * (1.0 + data.y().norm()), "alternative does not interpolate");
                let gap = alt.sub(&theta0).unwrap().norm() - base;
                min_gap = min_gap.min(gap);
                if gap < 0.0 {
                    violations += 1;
                }
            }
        }
        (violations, min_gap)
    });
    outcome(
        "3",
        violations == 0 && secs <= 5.0,
        format!(
            "20 instances x 100 alternative interpolants: {violations} closer to the start; \
             smallest excess distance {min_gap:.3e}; {secs:.2} s (limit 5 s)"
        ),
    )
}

fn criterion_4() -> Outcome {
    let ((worst1, worst2, q_max), secs) = timed(|| {
        let (d, l, m, n_s, n1, n2) = (40, 5, 8, 80, 12, 15);
        let cov = CovarianceSpec::exponential_decay(d, 8.0, 1e-2).unwrap();
        let realized = cov.realize().unwrap();
        let (mut worst1, mut worst2, mut q_max) = (0.0f64, 0.0f64, 0);
        for seed in 0..10u64 {
            let mut spec = EnsembleSpec::new(d, 1, l, m).unwrap();
            spec.source_cov = cov.clone();
            spec.target_cov = cov.clone();
            spec.seed = seed;
            let ens = build_task_ensemble(&spec).unwrap();
            let sources: Vec<Dataset> = (0..m)
                .map(|i| sample_with(&realized, &ens.source_theta(i), n_s, 0.0, seed, 100 + i as u64).unwrap())
                .collect();
            let models = train_all_sources(&sources, 1, TrainMode::CanonicalRank1).unwrap();
            let vhat = build_dictionary(&models, DEFAULT_DROP_TOL).unwrap();
            q_max = q_max.max(vhat.rank());
            let theta = &ens.theta_target;
            let data1 = sample_with(&realized, theta, n1, 0.0, seed, 1).unwrap();
            let data2 = sample_with(&realized, theta, n2, 0.0, seed, 2).unwrap();
            let (_, theta1) = phase1_fit(&vhat, &data1).unwrap();
            let (fit, _) = phase2(&theta1, &data2, &Phase2Solver::default()).unwrap();
            let sigma = realized.matrix();
            worst1 = worst1.max(excess_risk(&theta1, theta, &sigma).unwrap());
            worst2 = worst2.max(excess_risk(&fit.theta, theta, &sigma).unwrap());
        }
        (worst1, worst2, q_max)
    });
    outcome(
        "4",
        worst1 <= 1e-12 && worst2 <= 1e-12 && secs <= 2.0,
        format!(
            "10 seeds, learned dictionary (q <= {q_max}, l = 5): max EER phase1 {worst1:.3e}, phase2 {worst2:.3e} (limit 1e-12); \
             {secs:.2} s (limit 2 s)"
        ),
    )
}

fn criterion_5() -> Outcome {
    let ((worst, kstar_mismatch, iso_kstar), secs) = timed(|| {
        let mut rng = stream_rng(5, 0);
        let mut worst = 0.0f64;
        let mut kstar_mismatch = 0;
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
        for _ in 0..100 {
            let d = rng.random_range(1..=500);
            let mut eigs: Vec<f64> = (0..d).map(|_| 10f64.powf(rng.random_range(-6.0..2.0))).collect();
            eigs.sort_by(|a, b| b.total_cmp(a));
            let n = rng.random_range(1..=300);
            let rep = effective_ranks(&eigs, n, 2.0).unwrap();
            let mut brute_kstar = None;
            for k in 0..d {
                let (mut s, mut s2) = (0.0, 0.0);
                for &l in &eigs[k..] {
                    s += l;
                    s2 += l * l;
                }
                let r = s / eigs[k];
                let big_r = s * s / s2;
                worst = worst.max(rel(rep.r[k], r)).max(rel(rep.big_r[k], big_r));
                if brute_kstar.is_none() && r >= 2.0 * n as f64 {
                    brute_kstar = Some(k);
                }
            }
            if brute_kstar != rep.k_star {
                kstar_mismatch += 1;
            }
        }
        let iso = effective_ranks(&vec![1.0; 1000], 100, 2.0).unwrap();
        (worst, kstar_mismatch, iso.k_star)
    });
    outcome(
        "5",
        worst <= 1e-12 && kstar_mismatch == 0 && iso_kstar == Some(0) && secs <= 2.0,
        format!(
            "100 spectra: worst relative error {worst:.3e} (limit 1e-12), k* mismatches {kstar_mismatch}; \
             isotropic d=1000, n=100, b=2: k* = {iso_kstar:?}; {secs:.2} s (limit 2 s)"
        ),
    )
}

fn criterion_6() -> Outcome {
    let (results, secs) = timed(|| {
        let (d, sigma, chunks, chunk) = (10, 0.5, 10u64, 100_000);
        (0..5u64)
            .map(|inst| {
                let cov = CovarianceSpec::exponential_decay(d, 3.0, 0.05)
                    .unwrap()
                    .with_rotation(Rotation::SeededOrthogonal { seed: 60 + inst });
                let realized = cov.realize().unwrap();
                let mut rng = stream_rng(6, inst);
                let theta = Vector::new(normal_vec(&mut rng, d)).unwrap();
                let perturb = Vector::new(normal_vec(&mut rng, d)).unwrap().scaled(0.3);
                let theta_hat = theta.add(&perturb).unwrap();
                let predicted = excess_risk(&theta_hat, &theta, &realized.matrix()).unwrap() + sigma * sigma;
                let (mut sum, mut sum_sq, mut count) = (0.0, 0.0, 0.0);
                for c in 0..chunks {
                    let data = sample_with(&realized, &theta, chunk, sigma, 600 + inst, c).unwrap();
                    let fit = data.x().matvec(&theta_hat).unwrap();
                    for (f, y) in fit.as_slice().iter().zip(data.y().as_slice()) {
                        let r2 = (y - f).powi(2);
                        sum += r2;
                        sum_sq += r2 * r2;
                        count += 1.0;
                    }
                }
                let mean = sum / count;
                let se = ((sum_sq / count - mean * mean) * count / (count - 1.0) / count).sqrt();
                (predicted, mean, se)
            })
            .collect::<Vec<_>>()
    });
    let worst = results.iter().map(|(p, m, se)| (m - p).abs() / se).fold(0.0, f64::max);
    outcome(
        "6",
        worst <= 3.0 && secs <= 30.0,
        format!(
            "5 instances at 10^6 test points: worst |MC MSE - (EER + sigma^2)| = {worst:.2} standard errors \
             (limit 3); {secs:.2} s (limit 30 s)"
        ),
    )
}

fn criterion_7() -> Outcome {
    let ((held, lo_mean, hi_mean), secs) = timed(|| {
        let d = 50;
        let n = 50 * d;
        let cov = CovarianceSpec::exponential_decay(d, 10.0, 1e-2).unwrap();
        let sigma = cov.realize().unwrap().matrix();
        let theta = Vector::zeros(d);
        let (mut held, mut lo_sum, mut hi_sum) = (0, 0.0, 0.0);
        for seed in 0..50u64 {
            let data = sample_gaussian_dataset(&cov, &theta, n, 0.0, 700 + seed).unwrap();
            let rep = check_covariance_sandwich(&sigma, data.x(), 0.85, 1.15).unwrap();
            held += rep.holds as usize;
            lo_sum += rep.min_eigenvalue;
            hi_sum += rep.max_eigenvalue;
        }
        (held, lo_sum / 50.0, hi_sum / 50.0)
    });
    outcome(
        "7",
        held >= 45 && secs <= 10.0,
        format!(
            "n = 50 d, d = 50: [0.85, 1.15] sandwich held in {held}/50 trials (need >= 45); mean extreme \
             generalized eigenvalues [{lo_mean:.4}, {hi_mean:.4}]; {secs:.2} s (limit 10 s)"
        ),
    )
}

fn criterion_8() -> Outcome {
    let ((q, worst), secs) = timed(|| {
        let (d, l, m) = (100, 50, 60);
        let mut spec = EnsembleSpec::new(d, 1, l, m).unwrap();
        spec.seed = 8;
        let ens = build_task_ensemble(&spec).unwrap();
        let cov = spec.source_cov.realize().unwrap();
        let sources: Vec<Dataset> = (0..m)
            .map(|i| sample_with(&cov, &ens.source_theta(i), d, 0.0, 80, i as u64).unwrap())
            .collect();
        let models = train_all_sources(&sources, 1, TrainMode::CanonicalRank1).unwrap();
        let vhat = build_dictionary(&models, DEFAULT_DROP_TOL).unwrap();
        let worst = ens
            .vstar
            .columns()
            .columns()
            .iter()
            .map(|c| projection_residual(&vhat, c).unwrap())
            .fold(0.0, f64::max);
        (vhat.rank(), worst)
    });
    outcome(
        "8",
        q == 50 && worst <= 1e-6 && secs <= 5.0,
        format!("m = 60 noiseless sources, n_S = d = 100, l = 50: q = {q}, worst V* residual {worst:.3e} (limit 1e-6); {secs:.2} s (limit 5 s)"),
    )
}

fn criterion_9() -> Outcome {
    let (failures, secs) = timed(|| {
        let base = BoundInputs {
            n_s: 2000,
            n1: 100,
            n2: 100,
            m: 60,
            k: 1,
            d: 1000,
            q: 50,
            sigma: 0.1,
            epsilon: 0.2,
            r: 1.0,
            kappa: 10.0,
            ..BoundInputs::default()
        };
        let total = |i: &BoundInputs| theorem1_bound(i).unwrap().total.unwrap();
        let mut failures = Vec::new();
        for n1 in [1, 7, 100, 12345] {
            let a = theorem1_bound(&BoundInputs { n1, ..base.clone() }).unwrap().components.head;
            let b = theorem1_bound(&BoundInputs { n1: 2 * n1, ..base.clone() }).unwrap().components.head;
            if b != a / 2.0 {
                failures.push(format!("head term at n1={n1} did not halve"));
            }
        }
        let grid = [0.0, 0.05, 0.1, 0.5, 2.0];
        for w in grid.windows(2) {
            if !(total(&BoundInputs { sigma: w[0], ..base.clone() }) < total(&BoundInputs { sigma: w[1], ..base.clone() })) {
                failures.push(format!("not increasing in sigma at {}", w[0]));
            }
            if !(total(&BoundInputs { epsilon: w[0], ..base.clone() }) < total(&BoundInputs { epsilon: w[1], ..base.clone() })) {
                failures.push(format!("not increasing in epsilon at {}", w[0]));
            }
        }
        for w in [10, 100, 1000, 10_000].windows(2) {
            if !(total(&BoundInputs { n_s: w[0], ..base.clone() }) > total(&BoundInputs { n_s: w[1], ..base.clone() })) {
                failures.push(format!("not decreasing in n_s at {}", w[0]));
            }
            if !(total(&BoundInputs { m: w[0], ..base.clone() }) > total(&BoundInputs { m: w[1], ..base.clone() })) {
                failures.push(format!("not decreasing in m at {}", w[0]));
            }
        }
        failures
    });
    outcome(
        "9",
        failures.is_empty() && secs <= 1.0,
        format!("Phase-1 bound monotonicity suite: {} failures {:?}; {secs:.3} s (limit 1 s)", failures.len(), failures),
    )
}

fn criterion_10() -> Outcome {
    let ((identical, bytes), secs) = timed(|| {
        let config = smoke_config();
        let csv = || {
            let rows = run_sweep(&config).unwrap();
            let mut buf = Vec::new();
            write_results_csv(&rows, &mut buf).unwrap();
            buf
        };
        let (a, b) = (csv(), csv());
        (a == b, a.len())
    });
    outcome(
        "10",
        identical && secs <= 30.0,
        format!("two smoke sweeps with the same seed: byte-identical CSV ({bytes} bytes): {identical}; {secs:.2} s (limit 30 s)"),
    )
}

fn main() -> ExitCode {
    let skip_sweep = std::env::var_os("RTX_ACCEPTANCE_SKIP_SWEEP").is_some();
    let mut results = Vec::new();
    let mut run = |o: Outcome| {
        println!("{} criterion {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.detail);
        results.push(o.pass);
    };
    if skip_sweep {
        println!("SKIP criterion 1: RTX_ACCEPTANCE_SKIP_SWEEP is set");
    } else {
        for o in criterion_1() {
            run(o);
        }
    }
    run(criterion_2());
    run(criterion_3());
    run(criterion_4());
    run(criterion_5());
    run(criterion_6());
    run(criterion_7());
    run(criterion_8());
    run(criterion_9());
    run(criterion_10());
    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
