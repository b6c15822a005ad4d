//! Partial learner (dense subspace + isotropic learner), the query-budgeted
//! weak learner, boosting by multiplicative reweighting, and the active
//! halfspace learner built on top.

use crate::config::LearnerConfig;
use crate::error::{Error, Result};
use crate::geometry_oracle::{FramedOracle, Sign, SignOracle, WeightedSet};
use crate::iso_learn::{iso_learn, IsoParams, IsoStatus};
use crate::isotropy::{dense_isotropic_subspace, IsotropicTransform};
use crate::seed::Streams;
use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Weight divisor applied to a point each time it is labeled.
pub const REWEIGHT: f64 = 11.0;
/// Relative weights below `11^-MAX_WEIGHT_GAP` are dropped from a round.
pub const MAX_WEIGHT_GAP: u32 = 280;

/// Everything needed to re-check one inference round after the fact.
/// Point indices refer to the collection the round was run on.
#[derive(Debug, Clone)]
pub struct RoundTranscript {
    /// Reference point in ambient coordinates: `<x_ref', h'> = <reference, h>`.
    pub reference: DVector<f64>,
    pub ref_sign: Sign,
    pub transform: IsotropicTransform,
    /// Accepted points of the dimension reduction, if one ran.
    pub small: Vec<usize>,
    /// Required bound on `|<s, h>| / (||T s|| |<reference, h>|)` for `s` in `small`.
    pub small_bound: f64,
    pub labeled: Vec<(usize, Sign, Option<f64>)>,
}

impl RoundTranscript {
    pub fn needs_check(&self) -> bool {
        !self.small.is_empty()
    }

    pub fn reindex(mut self, map: &[usize]) -> Self {
        for s in &mut self.small {
            *s = map[*s];
        }
        for l in &mut self.labeled {
            l.0 = map[l.0];
        }
        self
    }
}

#[derive(Debug, Clone)]
pub struct PartialOutput {
    pub labels: Vec<Option<Sign>>,
    pub certs: Vec<Option<f64>>,
    pub status: IsoStatus,
    pub k: Option<f64>,
    pub subspace_dim: usize,
    pub subspace_mass: f64,
    pub stalled: bool,
    pub transcript: Option<RoundTranscript>,
    pub queries: u64,
}

pub fn partial_learn(
    oracle: &mut dyn SignOracle,
    set: &WeightedSet,
    cfg: &LearnerConfig,
    p: f64,
    streams: &mut Streams,
) -> Result<PartialOutput> {
    let d = set.dim();
    if oracle.dim() != d {
        return Err(Error::DimensionMismatch { expected: oracle.dim(), got: d });
    }
    let start = oracle.queries();
    let dense = dense_isotropic_subspace(set, cfg.forster.eps, cfg.forster.max_iter)?;
    let members = &dense.witness.members;
    let local = dense.transform.transform_set(set, members)?;
    let k_local = local.dim();
    let map = dense.transform.query_map();
    let params = IsoParams::new(cfg, k_local, d, p);
    let iso = {
        let mut framed = FramedOracle::new(oracle, &map)?;
        iso_learn(&mut framed, &local, &params, streams)?
    };

    let n = set.len();
    let mut labels = vec![None; n];
    let mut certs = vec![None; n];
    let mut labeled = Vec::new();
    for (j, &i) in members.iter().enumerate() {
        labels[i] = iso.labels[j];
        certs[i] = iso.certs[j];
        if let Some(s) = iso.labels[j] {
            labeled.push((i, s, iso.certs[j]));
        }
    }
    let transcript = iso.round.as_ref().map(|r| RoundTranscript {
        reference: &map * &r.x_ref,
        ref_sign: r.s_ref,
        transform: dense.transform.clone(),
        small: r.reduction.as_ref().map(|red| red.small.iter().map(|&s| members[s]).collect()).unwrap_or_default(),
        small_bound: r.small_bound().unwrap_or(0.0),
        labeled,
    });
    Ok(PartialOutput {
        labels,
        certs,
        status: iso.status,
        k: iso.round.as_ref().map(|r| r.k),
        subspace_dim: k_local,
        subspace_mass: dense.witness.mass,
        stalled: dense.stalled,
        transcript,
        queries: oracle.queries() - start,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundRecord {
    pub k: Option<f64>,
    pub subspace_dim: usize,
    /// Mass (under the input weights) still unlabeled when the round started.
    pub remaining_mass: f64,
    /// Mass labeled by this round.
    pub covered_mass: f64,
    pub queries: u64,
    pub status: IsoStatus,
}

impl RoundRecord {
    /// Labeled at least a `k/d` fraction of what remained.
    pub fn met_target(&self, d: usize) -> bool {
        match self.k {
            Some(k) => self.covered_mass >= (k / d as f64).min(1.0) * self.remaining_mass * (1.0 - 1e-12),
            None => false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WeakOutput {
    pub labels: Vec<Option<Sign>>,
    pub certs: Vec<Option<f64>>,
    pub rounds: Vec<RoundRecord>,
    pub transcripts: Vec<RoundTranscript>,
    pub queries: u64,
    pub budget: u64,
    pub budget_hit: bool,
}

impl WeakOutput {
    pub fn coverage(&self, set: &WeightedSet) -> f64 {
        (0..set.len()).filter(|&i| self.labels[i].is_some()).map(|i| set.weights()[i]).sum()
    }
}

/// Repeats the partial learner on the unlabeled remainder until everything
/// is labeled or the query budget is spent.
pub fn weak_learn(
    oracle: &mut dyn SignOracle,
    set: &WeightedSet,
    cfg: &LearnerConfig,
    streams: &mut Streams,
) -> Result<WeakOutput> {
    let d = set.dim();
    let n = set.len();
    let p = cfg.failure_prob(d);
    let budget = cfg.weak_budget(d);
    let start = oracle.queries();
    let mut labels = vec![None; n];
    let mut certs = vec![None; n];
    let mut rounds = Vec::new();
    let mut transcripts = Vec::new();
    let mut remaining: Vec<usize> = (0..n).collect();
    while !remaining.is_empty() && oracle.queries() - start < budget {
        let sub = set.restrict(&remaining)?;
        let out = partial_learn(oracle, &sub, cfg, p, streams)?;
        let remaining_mass = set.mass(&remaining);
        let mut covered = 0.0;
        for (j, &i) in remaining.iter().enumerate() {
            if let Some(s) = out.labels[j] {
                labels[i] = Some(s);
                certs[i] = out.certs[j];
                covered += set.weights()[i];
            }
        }
        rounds.push(RoundRecord {
            k: out.k,
            subspace_dim: out.subspace_dim,
            remaining_mass,
            covered_mass: covered,
            queries: out.queries,
            status: out.status,
        });
        if let Some(t) = out.transcript {
            transcripts.push(t.reindex(&remaining));
        }
        remaining.retain(|&i| labels[i].is_none());
    }
    let queries = oracle.queries() - start;
    Ok(WeakOutput { labels, certs, rounds, transcripts, queries, budget, budget_hit: !remaining.is_empty() })
}

/// Coverage implied by the round records alone: rounds that met their
/// `k/d` target compound to at least `1 - exp(-sum k / d)`.
pub fn replay_coverage_bound(rounds: &[RoundRecord], d: usize) -> f64 {
    let sum_k: f64 = rounds.iter().filter(|r| r.met_target(d)).filter_map(|r| r.k).sum();
    1.0 - (-sum_k / d as f64).exp()
}

/// Boosting weights kept as exact labeled-round counts; `wt(x) = 11^-count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightState {
    pub counts: Vec<u32>,
}

impl WeightState {
    pub fn new(n: usize) -> Self {
        Self { counts: vec![0; n] }
    }

    pub fn weight(&self, i: usize) -> f64 {
        REWEIGHT.powi(-(self.counts[i] as i32))
    }

    /// Indices with relative weight above `11^-MAX_WEIGHT_GAP` and their
    /// normalized weights.
    pub fn distribution(&self) -> (Vec<usize>, Vec<f64>) {
        let min = *self.counts.iter().min().unwrap_or(&0);
        let idx: Vec<usize> = (0..self.counts.len()).filter(|&i| self.counts[i] - min <= MAX_WEIGHT_GAP).collect();
        let w: Vec<f64> = idx.iter().map(|&i| REWEIGHT.powi(-((self.counts[i] - min) as i32))).collect();
        let total: f64 = w.iter().sum();
        (idx, w.into_iter().map(|x| x / total).collect())
    }
}

#[derive(Debug, Clone)]
pub struct BoostOutput {
    pub labels: Vec<Sign>,
    pub weights: WeightState,
    /// Votes per point as `[neg, zero, pos]`.
    pub votes: Vec<[u32; 3]>,
    pub rounds: usize,
    pub queries: u64,
    /// Some point had a `+`/`-` tie, resolved by its earliest vote.
    pub tie_flag: bool,
    pub weak_coverage: Vec<f64>,
}

pub fn boost_rounds(n: usize, delta: f64, c: f64) -> usize {
    (c * (n as f64 / delta).ln()).ceil().max(1.0) as usize
}

pub fn boost(
    oracle: &mut dyn SignOracle,
    points: &DMatrix<f64>,
    delta: f64,
    cfg: &LearnerConfig,
    streams: &mut Streams,
) -> Result<BoostOutput> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput("delta must lie in (0, 1)".into()));
    }
    let n = points.ncols();
    WeightedSet::uniform(points.clone())?;
    let start = oracle.queries();
    let rounds = boost_rounds(n, delta, cfg.boost_rounds_c);
    let mut weights = WeightState::new(n);
    let mut votes = vec![[0u32; 3]; n];
    let mut first = vec![None; n];
    let mut weak_coverage = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let (idx, w) = weights.distribution();
        let set = WeightedSet::new(points.select_columns(&idx), w)?;
        let out = weak_learn(oracle, &set, cfg, streams)?;
        weak_coverage.push(out.coverage(&set));
        for (j, &i) in idx.iter().enumerate() {
            if let Some(s) = out.labels[j] {
                weights.counts[i] += 1;
                votes[i][vote_slot(s)] += 1;
                first[i].get_or_insert(s);
            }
        }
    }
    let mut labels = Vec::with_capacity(n);
    let mut tie_flag = false;
    for i in 0..n {
        let v = votes[i];
        let top = *v.iter().max().unwrap();
        if top == 0 {
            return Err(Error::NoVote { index: i });
        }
        let winners: Vec<usize> = (0..3).filter(|&s| v[s] == top).collect();
        let label = match winners.as_slice() {
            [s] => SLOTS[*s],
            [0, 2] => {
                tie_flag = true;
                first[i].unwrap()
            }
            _ => return Err(Error::NoVote { index: i }),
        };
        labels.push(label);
    }
    Ok(BoostOutput { labels, weights, votes, rounds, queries: oracle.queries() - start, tie_flag, weak_coverage })
}

const SLOTS: [Sign; 3] = [Sign::Neg, Sign::Zero, Sign::Pos];

fn vote_slot(s: Sign) -> usize {
    match s {
        Sign::Neg => 0,
        Sign::Zero => 1,
        Sign::Pos => 2,
    }
}

pub fn active_sample_count(d: usize, eps: f64, delta: f64, c: f64) -> usize {
    (c * (d as f64 + (2.0 / delta).ln()) / eps).ceil() as usize
}

#[derive(Debug, Clone)]
pub struct ActiveOutput {
    pub hypothesis: DVector<f64>,
    pub samples: usize,
    pub distinct: usize,
    pub queries: u64,
    pub min_margin: f64,
}

/// Draws samples, labels them all by boosting, then returns a halfspace
/// consistent with every label.
pub fn active_learn_halfspace<F>(
    oracle: &mut dyn SignOracle,
    mut sampler: F,
    eps: f64,
    delta: f64,
    cfg: &LearnerConfig,
    streams: &mut Streams,
) -> Result<ActiveOutput>
where
    F: FnMut(&mut ChaCha8Rng) -> DVector<f64>,
{
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput("eps must lie in (0, 1)".into()));
    }
    let d = oracle.dim();
    let m = active_sample_count(d, eps, delta, cfg.active_samples_c);
    let mut rng = streams.rng("active_samples");
    let mut distinct: Vec<DVector<f64>> = Vec::new();
    for _ in 0..m {
        let x = sampler(&mut rng);
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        if x.norm() > 0.0 && !distinct.contains(&x) {
            distinct.push(x);
        }
    }
    let points = DMatrix::from_columns(&distinct);
    let start = oracle.queries();
    let labels = if distinct.len() == 1 {
        vec![oracle.sign(&distinct[0])?]
    } else {
        boost(oracle, &points, delta / 2.0, cfg, streams)?.labels
    };
    let (hypothesis, min_margin) = consistent_halfspace(&points, &labels)?;
    Ok(ActiveOutput { hypothesis, samples: m, distinct: distinct.len(), queries: oracle.queries() - start, min_margin })
}

/// Maximizes the smallest signed margin over unit-box normals; points
/// labeled zero are constrained onto the hyperplane. Returns the unit normal
/// and the optimal margin, which must be positive.
pub fn consistent_halfspace(points: &DMatrix<f64>, labels: &[Sign]) -> Result<(DVector<f64>, f64)> {
    let (d, n) = points.shape();
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let w: Vec<_> = (0..d).map(|_| lp.add_var(0.0, (-1.0, 1.0))).collect();
    let t = lp.add_var(1.0, (f64::NEG_INFINITY, 1.0));
    let mut signed = 0;
    for i in 0..n {
        let x = points.column(i);
        let norm = x.norm();
        let sign = if labels[i] == Sign::Zero { 1.0 } else { labels[i].as_f64() };
        let mut row: Vec<_> = (0..d).map(|j| (w[j], sign * x[j] / norm)).collect();
        match labels[i] {
            Sign::Zero => lp.add_constraint(&row, ComparisonOp::Eq, 0.0),
            _ => {
                signed += 1;
                row.push((t, -1.0));
                lp.add_constraint(&row, ComparisonOp::Ge, 0.0);
            }
        }
    }
    if signed == 0 {
        return Err(Error::Infeasible);
    }
    let sol = lp.solve().map_err(|_| Error::Infeasible)?;
    let margin = sol[t];
    if margin <= 1e-12 {
        return Err(Error::Infeasible);
    }
    let h = DVector::from_fn(d, |j, _| sol[w[j]]);
    let norm = h.norm();
    Ok((h / norm, margin / norm))
}
