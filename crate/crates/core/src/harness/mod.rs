//! Experiment plumbing: TOML configs, parallel repetitions, CSV traces and
//! log-log rate estimates.

mod config;
mod rates;

pub use config::{ExperimentConfig, ProblemSpec, ReferenceSpec};
pub use rates::{default_horizons, estimate_rate, rate_sweep, HorizonStat, RateEstimate, RateMetric, RateSweep};

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::optimizer::{self, Trace};

pub const TRACE_HEADER: [&str; 7] = ["run_id", "k", "F", "gap_bregman", "step_norm", "gamma_k", "alpha_k"];
pub const SUMMARY_HEADER: [&str; 7] = [
    "run_id",
    "seed",
    "horizon",
    "steps",
    "mean_gap",
    "mean_grad_norm",
    "final_F",
];

/// 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    /// One trace per repetition, in seed order; failed runs keep their partial trace.
    pub traces: Vec<Trace>,
    pub trace_path: PathBuf,
    pub summary_path: PathBuf,
}

/// `out.csv` → `out_summary.csv`.
pub fn summary_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    output.with_file_name(format!("{stem}_summary.csv"))
}

/// Runs every repetition, writes the trace CSV and the per-run summary, and
/// reports the first failing repetition (after writing what was computed).
pub fn run_experiment(config: &ExperimentConfig, output: Option<&Path>) -> Result<ExperimentResult> {
    config.check()?;
    let problem = config.problem.build()?;
    let configs: Vec<_> = (0..config.repetitions)
        .map(|rep| config.run_config(rep))
        .collect::<Result<_>>()?;
    configs[0].validate(&problem)?;
    let outcomes: Vec<_> = configs.par_iter().map(|rc| optimizer::run(rc, &problem)).collect();
    let mut traces = Vec::with_capacity(outcomes.len());
    let mut failure = None;
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(t) => traces.push(t),
            Err(f) => {
                if failure.is_none() {
                    failure = Some(Error::Numerical(format!("repetition {rep} (seed {}): {}", f.partial.seed, f.error)));
                }
                traces.push(f.partial);
            }
        }
    }
    let trace_path = output.map(Path::to_path_buf).unwrap_or_else(|| config.output.clone());
    let summary = summary_path(&trace_path);
    write_traces(&trace_path, &traces)?;
    write_summary(&summary, config.horizon, &traces)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(ExperimentResult {
            traces,
            trace_path,
            summary_path: summary,
        }),
    }
}

fn create(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    csv::Writer::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_traces(path: &Path, traces: &[Trace]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    for (run_id, t) in traces.iter().enumerate() {
        for r in &t.records {
            w.write_record([
                run_id.to_string(),
                r.k.to_string(),
                fmt_float(r.f_value),
                fmt_float(r.gap_bregman),
                fmt_float(r.step_norm),
                fmt_float(r.gamma),
                fmt_float(r.alpha),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per run; `mean_gap` is `(1/(K+1)) Σ_k gap(x^{k+1})`.
pub fn write_summary(path: &Path, horizon: usize, traces: &[Trace]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    for (run_id, t) in traces.iter().enumerate() {
        let final_f = t.records.last().map_or(t.f0, |r| r.f_value);
        w.write_record([
            run_id.to_string(),
            t.seed.to_string(),
            horizon.to_string(),
            t.records.len().to_string(),
            fmt_float(t.mean_gap()),
            fmt_float(t.mean_grad_norm()),
            fmt_float(final_f),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the polynomial fit curves as `t,poly,preconditioner,sign`.
pub fn write_fit_csv(out: &mut impl Write, report: &crate::polar_express::FitReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "poly", "preconditioner", "sign"]).map_err(csv_err)?;
    for p in &report.curves {
        w.write_record([fmt_float(p.t), fmt_float(p.poly), fmt_float(p.preconditioner), fmt_float(p.sign)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
