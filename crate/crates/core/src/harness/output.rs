//! Result tables.

use std::io::Write;

use super::run::{ResultRow, TrialRecord};
use super::HarnessError;

pub const RESULTS_HEADER: [&str; 10] = [
    "n1",
    "n2",
    "ratio_db",
    "phase1_mean",
    "phase1_se",
    "phase2_mean",
    "phase2_se",
    "scratch_mean",
    "scratch_se",
    "trials",
];

pub fn write_results_csv<W: Write>(rows: &[ResultRow], w: W) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RESULTS_HEADER)?;
    for r in rows {
        out.write_record([
            r.n1.to_string(),
            r.n2.to_string(),
            r.ratio_db.to_string(),
            r.phase1_mean.to_string(),
            r.phase1_se.to_string(),
            r.phase2_mean.to_string(),
            r.phase2_se.to_string(),
            r.scratch_mean.to_string(),
            r.scratch_se.to_string(),
            r.trials.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One line per trial, including failed ones.
pub fn write_trials_csv<W: Write>(records: &[TrialRecord], w: W) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "n1", "n2", "ratio_db", "trial", "seed", "phase1", "phase2", "scratch", "phase1_eer",
        "phase2_eer", "scratch_eer", "q", "gd_iters", "gd_converged", "error",
    ])?;
    for r in records {
        let mut rec = vec![
            r.n1.to_string(),
            r.n2.to_string(),
            r.ratio_db.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
        ];
        match &r.outcome {
            Some(o) => rec.extend([
                o.phase1_ratio.to_string(),
                o.phase2_ratio.to_string(),
                o.scratch_ratio.to_string(),
                o.phase1_eer.to_string(),
                o.phase2_eer.to_string(),
                o.scratch_eer.to_string(),
                o.q.to_string(),
                o.gd_iters.to_string(),
                o.gd_converged.to_string(),
                String::new(),
            ]),
            None => {
                rec.extend(std::iter::repeat_n(String::new(), 9));
                rec.push(r.error.clone().unwrap_or_default());
            }
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Long-format `series,x,y` where `x` is the pooled sample size `n₁ + n₂`
/// and each series is one method at one ratio.
pub fn write_plot_data<W: Write>(rows: &[ResultRow], w: W) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["series", "x", "y"])?;
    for method in ["phase1", "phase2", "scratch"] {
        for r in rows {
            let y = match method {
                "phase1" => r.phase1_mean,
                "phase2" => r.phase2_mean,
                _ => r.scratch_mean,
            };
            out.write_record([format!("{method}@{}dB", r.ratio_db), (r.n1 + r.n2).to_string(), y.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}
