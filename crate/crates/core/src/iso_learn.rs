//! Partial labeling of an (approximately) isotropic point set: a reference
//! point, an optional small-margin subspace to factor out, and relative
//! margins of a complementary basis. Every inferred label carries a
//! certificate `C_v` with `C_v / 2 <= |<x, h> / <x_ref, h>| <= 2 C_v`.

use crate::config::{log2_floor1, LearnerConfig};
use crate::dim_reduce::{dim_reduce, DimReduceOutcome, DimReduceParams, Reduction};
use crate::error::{Error, Result};
use crate::geometry_oracle::{gaussian_combination, search_with_escape, CappedOracle, Sign, SignOracle, WeightedSet};
use crate::seed::Streams;
use crate::structure_search::{structure_search, StructureKind, StructureParams};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

const MAX_DOUBLINGS: u32 = 60;

#[derive(Debug, Clone)]
pub struct IsoParams {
    pub lambda: f64,
    pub p: f64,
    pub ell_gap: f64,
    pub theta: f64,
    pub repetition_c: f64,
    pub dim_reduce_c: f64,
    pub cap_c: f64,
}

impl IsoParams {
    /// Parameters for a `d`-dimensional instance inside an ambient space of
    /// dimension `ambient`.
    pub fn new(cfg: &LearnerConfig, d: usize, ambient: usize, p: f64) -> Self {
        let lambda = cfg.lambda_for(ambient);
        Self {
            lambda,
            p,
            ell_gap: cfg.ell_gap(d, lambda),
            theta: cfg.dim_reduce_theta(d, lambda),
            repetition_c: cfg.repetition_c,
            dim_reduce_c: cfg.dim_reduce_c,
            cap_c: cfg.iso_cap_c,
        }
    }

    /// Bisection tolerance `1 / (3 sqrt(10) lambda d^1.5)`.
    pub fn tolerance(&self, d: usize) -> f64 {
        1.0 / (3.0 * 10f64.sqrt() * self.lambda * (d as f64).powf(1.5))
    }

    /// Initial bisection range `2 lambda sqrt(10 d)`.
    pub fn range_cap(&self, d: usize) -> f64 {
        2.0 * self.lambda * (10.0 * d as f64).sqrt()
    }

    /// Labeling threshold on `|score|`: `2 / (3 lambda sqrt(10 d))`.
    pub fn threshold(&self, d: usize) -> f64 {
        2.0 / (3.0 * self.lambda * (10.0 * d as f64).sqrt())
    }

    pub fn query_cap(&self, d: usize) -> u64 {
        let df = d.max(1) as f64;
        (self.cap_c * df * log2_floor1(d) * (df * self.lambda / self.p).log2().max(1.0)).ceil() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbortReason {
    ZeroReference,
    DimReduceFailed,
    RangeExceeded,
    QueryCap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IsoStatus {
    /// Every point lies on the hyperplane.
    AllZero,
    Inferred,
    Aborted(AbortReason),
}

#[derive(Debug, Clone)]
pub struct IsoRound {
    pub x_ref: DVector<f64>,
    pub s_ref: Sign,
    pub kind: StructureKind,
    pub k: f64,
    pub reduction: Option<Reduction>,
    /// Margin bound on the small subspace relative to `|<x_ref, h>|`.
    pub tau: f64,
    pub gammas: Vec<f64>,
}

impl IsoRound {
    /// `tau / kappa`: required bound on `|m(s)| / |m(x_ref)|` for the
    /// accepted points of the reduction.
    pub fn small_bound(&self) -> Option<f64> {
        self.reduction.as_ref().map(|r| self.tau / r.kappa)
    }
}

#[derive(Debug, Clone)]
pub struct IsoOutput {
    pub labels: Vec<Option<Sign>>,
    pub certs: Vec<Option<f64>>,
    pub status: IsoStatus,
    pub round: Option<IsoRound>,
    pub queries: u64,
}

impl IsoOutput {
    fn empty(n: usize, status: IsoStatus, queries: u64) -> Self {
        Self { labels: vec![None; n], certs: vec![None; n], status, round: None, queries }
    }

    pub fn labeled(&self) -> usize {
        self.labels.iter().filter(|l| l.is_some()).count()
    }
}

pub fn iso_learn(
    oracle: &mut dyn SignOracle,
    set: &WeightedSet,
    params: &IsoParams,
    streams: &mut Streams,
) -> Result<IsoOutput> {
    let d = set.dim();
    if oracle.dim() != d {
        return Err(Error::DimensionMismatch { expected: oracle.dim(), got: d });
    }
    let cap = params.query_cap(d);
    let mut capped = CappedOracle::new(oracle, cap);
    match run(&mut capped, set, params, streams) {
        Ok(mut out) => {
            out.queries = capped.spent();
            Ok(out)
        }
        Err(Error::BudgetExhausted { .. }) if capped.cap_hit() => {
            Ok(IsoOutput::empty(set.len(), IsoStatus::Aborted(AbortReason::QueryCap), capped.spent()))
        }
        Err(e) => Err(e),
    }
}

fn run(oracle: &mut dyn SignOracle, set: &WeightedSet, params: &IsoParams, streams: &mut Streams) -> Result<IsoOutput> {
    let d = set.dim();
    let n = set.len();
    let all: Vec<usize> = (0..n).collect();

    oracle.note_margin_call();
    let probe = gaussian_combination(set.points(), &all, &mut streams.rng("zero_test"));
    let s_probe = oracle.sign(&probe)?;
    if s_probe == Sign::Zero {
        let mut all_zero = true;
        for i in 0..d {
            if oracle.sign(&DVector::from_fn(d, |j, _| if i == j { 1.0 } else { 0.0 }))? != Sign::Zero {
                all_zero = false;
                break;
            }
        }
        if all_zero {
            return Ok(IsoOutput {
                labels: vec![Some(Sign::Zero); n],
                certs: vec![None; n],
                status: IsoStatus::AllZero,
                round: None,
                queries: 0,
            });
        }
    }

    if d == 1 && s_probe != Sign::Zero {
        return Ok(collinear(set, probe, s_probe));
    }

    let sp = StructureParams { ell: params.ell_gap, p: params.p / 2.0, repetition_c: params.repetition_c };
    let found = structure_search(oracle, set, &sp, streams)?;
    let x_ref = found.x_ref.clone();
    let s_ref = oracle.sign(&x_ref)?;
    if s_ref == Sign::Zero {
        return Ok(IsoOutput::empty(n, IsoStatus::Aborted(AbortReason::ZeroReference), 0));
    }

    let (basis, reduction) = if found.k < d as f64 / 10.0 {
        let dp = DimReduceParams { theta: params.theta, p: params.p / 2.0, sample_c: params.dim_reduce_c };
        match dim_reduce(oracle, set, &x_ref, found.k, &dp, streams)? {
            DimReduceOutcome::Success(r) => (r.v_perp.clone(), Some(r)),
            DimReduceOutcome::Failure => {
                return Ok(IsoOutput::empty(n, IsoStatus::Aborted(AbortReason::DimReduceFailed), 0));
            }
        }
    } else {
        (DMatrix::identity(d, d), None)
    };

    let tol = params.tolerance(d);
    let cap = params.range_cap(d);
    let mut gammas = Vec::with_capacity(basis.ncols());
    for w in basis.column_iter() {
        match search_with_escape(oracle, &w.into_owned(), &x_ref, s_ref, tol, cap, MAX_DOUBLINGS) {
            Ok(g) => gammas.push(g),
            Err(Error::RangeExceeded { .. }) => {
                return Ok(IsoOutput::empty(n, IsoStatus::Aborted(AbortReason::RangeExceeded), 0));
            }
            Err(e) => return Err(e),
        }
    }

    let gamma = DVector::from_vec(gammas.clone());
    let scores = basis.transpose() * set.points();
    let thr = params.threshold(d);
    let mut labels = vec![None; n];
    let mut certs = vec![None; n];
    for i in 0..n {
        let score = scores.column(i).dot(&gamma);
        if score.abs() >= thr {
            labels[i] = Some(s_ref.mul(Sign::of(score)));
            certs[i] = Some(score.abs());
        }
    }
    let tau = params.tolerance(d);
    Ok(IsoOutput {
        labels,
        certs,
        status: IsoStatus::Inferred,
        round: Some(IsoRound { x_ref, s_ref, kind: found.kind, k: found.k, reduction, tau, gammas }),
        queries: 0,
    })
}

/// One-dimensional case: every point is a multiple of the probe, so
/// relative margins are exact.
fn collinear(set: &WeightedSet, probe: DVector<f64>, s_probe: Sign) -> IsoOutput {
    let n = set.len();
    let mut labels = Vec::with_capacity(n);
    let mut certs = Vec::with_capacity(n);
    for i in 0..n {
        let ratio = set.points()[(0, i)] / probe[0];
        labels.push(Some(s_probe.mul(Sign::of(ratio))));
        certs.push(Some(ratio.abs()));
    }
    IsoOutput {
        labels,
        certs,
        status: IsoStatus::Inferred,
        round: Some(IsoRound {
            x_ref: probe,
            s_ref: s_probe,
            kind: StructureKind::LargeMargin,
            k: 1.0,
            reduction: None,
            tau: 0.0,
            gammas: Vec::new(),
        }),
        queries: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry_oracle::{FramedOracle, QueryOracle};
    use nalgebra::DMatrix;

    #[test]
    fn parameter_values() {
        let cfg = LearnerConfig::default();
        let p = IsoParams::new(&cfg, 4, 4, cfg.failure_prob(4));
        assert!((p.tolerance(4) - 6.588_078_458_684_123e-4).abs() < 1e-18);
        assert!((p.range_cap(4) - 252.982_212_813_470_37).abs() < 1e-12);
        assert!((p.threshold(4) - 5.270_462_766_947_298e-3).abs() < 1e-17);
        assert_eq!(p.query_cap(4), 6309);
        assert_eq!(p.ell_gap, 100.0);
    }

    #[test]
    fn all_zero_instance() {
        // local frame spans e2, e3 while h = e1
        let pts = DMatrix::from_column_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let set = WeightedSet::uniform(pts).unwrap();
        let map = DMatrix::from_column_slice(3, 2, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let cfg = LearnerConfig::default();
        let mut base = QueryOracle::new(DVector::from_vec(vec![1.0, 0.0, 0.0]));
        let mut o = FramedOracle::new(&mut base, &map).unwrap();
        let out = iso_learn(&mut o, &set, &IsoParams::new(&cfg, 2, 3, 0.01), &mut Streams::new(0)).unwrap();
        assert_eq!(out.status, IsoStatus::AllZero);
        assert!(out.labels.iter().all(|l| *l == Some(Sign::Zero)));
        assert_eq!(out.queries, 3);
    }

    #[test]
    fn collinear_points_are_exact() {
        let pts = DMatrix::from_column_slice(1, 3, &[2.0, -1.0, 0.5]);
        let set = WeightedSet::uniform(pts).unwrap();
        let cfg = LearnerConfig::default();
        let mut o = QueryOracle::new(DVector::from_vec(vec![-3.0]));
        let out = iso_learn(&mut o, &set, &IsoParams::new(&cfg, 1, 1, 0.1), &mut Streams::new(0)).unwrap();
        assert_eq!(out.labels, vec![Some(Sign::Neg), Some(Sign::Pos), Some(Sign::Neg)]);
        assert_eq!(out.queries, 1);
    }

    #[test]
    fn labels_match_truth_on_isotropic_set() {
        let d = 3;
        let pts =
            DMatrix::from_fn(d, 30, |r, c| if r == c % d { 1.0 } else { 0.0 } * if c % 2 == 0 { 1.0 } else { -1.0 });
        let set = WeightedSet::uniform(pts).unwrap();
        let cfg = LearnerConfig::default();
        let mut o = QueryOracle::new(DVector::from_vec(vec![0.6, -0.8, 0.3]));
        let out = iso_learn(&mut o, &set, &IsoParams::new(&cfg, d, d, 0.01), &mut Streams::new(3)).unwrap();
        assert_eq!(out.status, IsoStatus::Inferred);
        assert!(out.labeled() > 0);
        for i in 0..30 {
            if let Some(s) = out.labels[i] {
                assert_eq!(s, o.truth(&set.point(i)));
            }
        }
    }

    #[test]
    fn query_cap_aborts() {
        let d = 4;
        let pts = DMatrix::from_fn(d, 20, |r, c| ((r * 5 + c * 3) % 7) as f64 - 3.0 + 0.1);
        let set = WeightedSet::uniform(pts).unwrap();
        let cfg = LearnerConfig { iso_cap_c: 0.01, ..LearnerConfig::default() };
        let mut o = QueryOracle::new(DVector::from_vec(vec![1.0, 2.0, -1.0, 0.5]));
        let params = IsoParams::new(&cfg, d, d, 0.01);
        let out = iso_learn(&mut o, &set, &params, &mut Streams::new(3)).unwrap();
        assert_eq!(out.status, IsoStatus::Aborted(AbortReason::QueryCap));
        assert_eq!(out.queries, params.query_cap(d));
        assert_eq!(out.labeled(), 0);
    }
}
