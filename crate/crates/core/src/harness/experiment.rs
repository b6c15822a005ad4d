use super::instance::{gen_instance, Family, FamilyParams};
use super::percentile;
use crate::config::{log2_floor1, LearnerConfig};
use crate::error::{Error, Result};
use crate::geometry_oracle::{SignOracle, WeightedSet};
use crate::learners::{boost, partial_learn};
use crate::par;
use crate::seed::Streams;
use crate::verification::zero_error_locate;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Boosting with failure probability `delta`.
    Bounded,
    /// Verified, never wrong.
    Zero,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Bounded => "bounded",
            Mode::Zero => "zero",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bounded" => Ok(Mode::Bounded),
            "zero" => Ok(Mode::Zero),
            _ => Err(Error::InvalidInput(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub family: Family,
    pub dims: Vec<usize>,
    pub sizes: Vec<usize>,
    pub delta: f64,
    pub mode: Mode,
    pub trials: usize,
    pub seed: u64,
    pub learner: LearnerConfig,
    pub params: FamilyParams,
}

impl ExperimentConfig {
    pub fn new(family: Family, d: usize, n: usize) -> Self {
        Self {
            family,
            dims: vec![d],
            sizes: vec![n],
            delta: 0.1,
            mode: Mode::Zero,
            trials: 1,
            seed: crate::seed::DEFAULT_SEED,
            learner: LearnerConfig::default(),
            params: FamilyParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) || self.sizes.contains(&0) {
            return Err(Error::InvalidInput("dimensions and sizes must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidInput("delta must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub family: Family,
    pub d: usize,
    pub n: usize,
    pub mode: Mode,
    pub delta: f64,
    pub trial: usize,
    pub seed: u64,
    #[serde(rename = "queries_total")]
    pub queries: u64,
    pub margin_calls: u64,
    #[serde(rename = "errors_vs_truth")]
    pub errors: usize,
    /// Fraction of points that received a label.
    pub coverage: f64,
    pub status: String,
    pub runtime_ms: f64,
}

impl TrialRecord {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

pub fn run_trial(
    family: Family,
    d: usize,
    n: usize,
    mode: Mode,
    delta: f64,
    learner: &LearnerConfig,
    params: &FamilyParams,
    mut streams: Streams,
    trial: usize,
) -> TrialRecord {
    let t0 = Instant::now();
    let seed = streams.root();
    let mut rec = TrialRecord {
        family,
        d,
        n,
        mode,
        delta,
        trial,
        seed,
        queries: 0,
        margin_calls: 0,
        errors: 0,
        coverage: 0.0,
        status: "ok".into(),
        runtime_ms: 0.0,
    };
    let outcome =
        gen_instance(family, d, n, params, &mut streams).and_then(|inst| inst.problem()).and_then(|mut pb| {
            let labels = match mode {
                Mode::Bounded => boost(&mut pb.oracle, &pb.points, delta, learner, &mut streams).map(|o| o.labels),
                Mode::Zero => zero_error_locate(&mut pb.oracle, &pb.points, learner, &mut streams).map(|o| o.labels),
            };
            rec.queries = pb.oracle.queries();
            rec.margin_calls = pb.oracle.margin_calls();
            labels.map(|l| pb.errors(&l))
        });
    match outcome {
        Ok(e) => {
            rec.errors = e;
            rec.coverage = 1.0;
        }
        Err(e) => rec.status = e.to_string(),
    }
    rec.runtime_ms = t0.elapsed().as_secs_f64() * 1e3;
    rec
}

/// Every `(d, n, trial)` cell of the sweep, run data-parallel. Each trial
/// owns a child seed stream, so results do not depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>> {
    cfg.validate()?;
    let root = Streams::new(cfg.seed);
    let mut jobs = Vec::new();
    for &d in &cfg.dims {
        for &n in &cfg.sizes {
            for t in 0..cfg.trials {
                let key = ((d as u64) << 40) ^ ((n as u64) << 16) ^ t as u64;
                jobs.push((d, n, t, root.child(key)));
            }
        }
    }
    Ok(par::map(jobs, |(d, n, t, s)| run_trial(cfg.family, d, n, cfg.mode, cfg.delta, &cfg.learner, &cfg.params, s, t)))
}

/// 95th percentile of `queries / (k log2(d)^2)` for the partial learner on
/// uniform and clustered instances. The weak-learner budget constant is
/// frozen from this.
pub fn calibrate_budget_c(dims: &[usize], n: usize, runs: usize, seed: u64, cfg: &LearnerConfig) -> f64 {
    let root = Streams::new(seed);
    let mut jobs = Vec::new();
    for &d in dims {
        for fam in [Family::UniformSphere, Family::ClusteredSubspace] {
            for r in 0..runs {
                jobs.push((d, fam, root.child(((d as u64) << 32) ^ ((fam as u64) << 24) ^ r as u64)));
            }
        }
    }
    let costs: Vec<f64> = par::map(jobs, |(d, fam, mut s)| {
        let inst = gen_instance(fam, d, n, &FamilyParams::default(), &mut s).ok()?;
        let mut pb = inst.problem().ok()?;
        let set = WeightedSet::uniform(pb.points.clone()).ok()?;
        let out = partial_learn(&mut pb.oracle, &set, cfg, cfg.failure_prob(d), &mut s).ok()?;
        let k = out.k?;
        let l = log2_floor1(d);
        Some(out.queries as f64 / (k * l * l))
    })
    .into_iter()
    .flatten()
    .collect();
    percentile(&costs, 0.95)
}
