//! Instance generation, trial sweeps and report emission.

mod experiment;
mod instance;
mod report;

pub use experiment::{calibrate_budget_c, run_experiment, run_trial, ExperimentConfig, Mode, TrialRecord};
pub use instance::{gen_instance, random_unit, Family, FamilyParams, Instance, Problem, ProblemOracle};
pub use report::{emit_report, fmt_float, summarize, ExperimentReport, SummaryRow};

/// Median of a sample (mean of the middle pair for even sizes).
pub fn median(xs: &[f64]) -> f64 {
    percentile(xs, 0.5)
}

/// Linear-interpolation percentile, `q` in `[0, 1]`.
pub fn percentile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}
