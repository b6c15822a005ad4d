use super::experiment::{ExperimentConfig, Mode, TrialRecord};
use super::instance::Family;
use super::{median, percentile};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Seventeen significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub family: Family,
    pub mode: Mode,
    pub d: usize,
    pub n: usize,
    pub delta: f64,
    pub trials: usize,
    pub failed_runs: usize,
    pub runs_with_errors: usize,
    /// Runs with a wrong label or no labeling, to compare against `delta`.
    pub error_run_fraction: f64,
    pub median_queries: f64,
    pub p95_queries: f64,
    pub mean_runtime_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub config: Option<ExperimentConfig>,
    pub trials: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentReport {
    pub fn new(records: &[TrialRecord], config: Option<&ExperimentConfig>) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.cloned(),
            trials: records.to_vec(),
            summary: summarize(records),
        }
    }

    /// Zero-error runs that emitted a wrong label.
    pub fn zero_error_violations(&self) -> usize {
        self.trials.iter().filter(|r| r.mode == Mode::Zero && r.errors > 0).count()
    }
}

pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String, usize, usize, u64), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.family.to_string(), r.mode.to_string(), r.d, r.n, r.delta.to_bits())).or_default().push(r);
    }
    groups
        .into_values()
        .map(|rs| {
            let q: Vec<f64> = rs.iter().map(|r| r.queries as f64).collect();
            let bad = rs.iter().filter(|r| r.errors > 0 || !r.ok()).count();
            SummaryRow {
                family: rs[0].family,
                mode: rs[0].mode,
                d: rs[0].d,
                n: rs[0].n,
                delta: rs[0].delta,
                trials: rs.len(),
                failed_runs: rs.iter().filter(|r| !r.ok()).count(),
                runs_with_errors: rs.iter().filter(|r| r.errors > 0).count(),
                error_run_fraction: bad as f64 / rs.len() as f64,
                median_queries: median(&q),
                p95_queries: percentile(&q, 0.95),
                mean_runtime_ms: rs.iter().map(|r| r.runtime_ms).sum::<f64>() / rs.len() as f64,
            }
        })
        .collect()
}

/// Writes `trials.csv`, `summary.csv` (the query-vs-(d, n) table) and
/// `report.json` into `dir`.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", dir.display()));
    let csv_err = |e: csv::Error| Error::Io(e.to_string());
    std::fs::create_dir_all(dir).map_err(io)?;
    let records = &report.trials;

    let mut w = csv::Writer::from_path(dir.join("trials.csv")).map_err(csv_err)?;
    w.write_record([
        "family",
        "mode",
        "d",
        "n",
        "delta",
        "trial",
        "seed",
        "queries_total",
        "margin_calls",
        "errors_vs_truth",
        "coverage",
        "status",
        "runtime_ms",
    ])
    .map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.family.to_string(),
            r.mode.to_string(),
            r.d.to_string(),
            r.n.to_string(),
            fmt_float(r.delta),
            r.trial.to_string(),
            r.seed.to_string(),
            r.queries.to_string(),
            r.margin_calls.to_string(),
            r.errors.to_string(),
            fmt_float(r.coverage),
            r.status.clone(),
            fmt_float(r.runtime_ms),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io)?;

    let mut w = csv::Writer::from_path(dir.join("summary.csv")).map_err(csv_err)?;
    w.write_record([
        "family",
        "mode",
        "d",
        "n",
        "delta",
        "trials",
        "failed_runs",
        "runs_with_errors",
        "error_run_fraction",
        "median_queries",
        "p95_queries",
        "mean_runtime_ms",
    ])
    .map_err(csv_err)?;
    for s in &report.summary {
        w.write_record([
            s.family.to_string(),
            s.mode.to_string(),
            s.d.to_string(),
            s.n.to_string(),
            fmt_float(s.delta),
            s.trials.to_string(),
            s.failed_runs.to_string(),
            s.runs_with_errors.to_string(),
            fmt_float(s.error_run_fraction),
            fmt_float(s.median_queries),
            fmt_float(s.p95_queries),
            fmt_float(s.mean_runtime_ms),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io)?;

    let json = serde_json::to_string_pretty(report).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(dir.join("report.json"), json).map_err(io)?;
    Ok(())
}
