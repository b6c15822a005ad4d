//! Sign oracles, margins and the margin-comparison primitives everything
//! else is built from.
//!
//! The hidden hyperplane is only ever touched through [`SignOracle::sign`].
//! Helpers that read `h` directly (`normalized_margin`, `true_sign`) exist
//! for tests and the harness.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

pub const DEFAULT_SIGN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Neg,
    Zero,
    Pos,
}

impl Sign {
    pub fn of(v: f64) -> Sign {
        if v > 0.0 {
            Sign::Pos
        } else if v < 0.0 {
            Sign::Neg
        } else {
            Sign::Zero
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Neg => -1.0,
            Sign::Zero => 0.0,
            Sign::Pos => 1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Neg => Sign::Pos,
            Sign::Zero => Sign::Zero,
            Sign::Pos => Sign::Neg,
        }
    }

    pub fn mul(self, other: Sign) -> Sign {
        Sign::of(self.as_f64() * other.as_f64())
    }
}

/// Sign of `value` with everything within `floor` reported as zero.
pub fn floored_sign(value: f64, floor: f64) -> Sign {
    if value.abs() <= floor {
        Sign::Zero
    } else {
        Sign::of(value)
    }
}

/// Unit-normalized points (columns) with a probability vector on them.
#[derive(Debug, Clone)]
pub struct WeightedSet {
    points: DMatrix<f64>,
    weights: Vec<f64>,
}

impl WeightedSet {
    pub fn new(mut points: DMatrix<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.ncols() != weights.len() {
            return Err(Error::DimensionMismatch { expected: points.ncols(), got: weights.len() });
        }
        if points.ncols() == 0 || points.nrows() == 0 {
            return Err(Error::InvalidInput("empty point set".into()));
        }
        for mut c in points.column_iter_mut() {
            let n = c.norm();
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::InvalidInput("points must be finite and nonzero".into()));
            }
            c /= n;
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) || !(total > 0.0) {
            return Err(Error::InvalidInput("weights must be positive".into()));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(Self { points, weights })
    }

    pub fn uniform(points: DMatrix<f64>) -> Result<Self> {
        let n = points.ncols();
        Self::new(points, vec![1.0; n])
    }

    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        self.points.column(i).into_owned()
    }

    /// Sub-collection on `idx` with weights renormalized.
    pub fn restrict(&self, idx: &[usize]) -> Result<WeightedSet> {
        let pts = self.points.select_columns(idx);
        let w = idx.iter().map(|&i| self.weights[i]).collect();
        WeightedSet::new(pts, w)
    }

    pub fn mass(&self, idx: &[usize]) -> f64 {
        idx.iter().map(|&i| self.weights[i]).sum()
    }

    /// `count` indices drawn independently from the weights.
    pub fn sample<R: Rng>(&self, rng: &mut R, count: usize) -> Vec<usize> {
        let dist = self.sampler();
        (0..count).map(|_| dist.sample(rng)).collect()
    }

    pub fn sampler(&self) -> WeightedIndex<f64> {
        WeightedIndex::new(&self.weights).expect("valid weights")
    }
}

/// Anything that answers `sign(<q, h> + b)` for a hidden `(h, b)`.
pub trait SignOracle {
    fn dim(&self) -> usize;
    fn sign(&mut self, q: &DVector<f64>) -> Result<Sign>;
    fn queries(&self) -> u64;
    /// Bookkeeping for margin-oracle invocations.
    fn note_margin_call(&mut self) {}
    fn margin_calls(&self) -> u64 {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleMode {
    Ternary,
    /// Points on the hyperplane answer `+`.
    Binary,
}

#[derive(Debug, Clone)]
pub struct QueryOracle {
    h: DVector<f64>,
    b: f64,
    floor_rel: f64,
    mode: OracleMode,
    budget: Option<u64>,
    used: u64,
    margin_calls: u64,
}

impl QueryOracle {
    pub fn new(h: DVector<f64>) -> Self {
        Self::with_bias(h, 0.0)
    }

    pub fn with_bias(h: DVector<f64>, b: f64) -> Self {
        Self { h, b, floor_rel: DEFAULT_SIGN_FLOOR, mode: OracleMode::Ternary, budget: None, used: 0, margin_calls: 0 }
    }

    pub fn binary(mut self) -> Self {
        self.mode = OracleMode::Binary;
        self
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = Some(budget);
        self
    }

    pub fn with_floor(mut self, floor_rel: f64) -> Self {
        self.floor_rel = floor_rel;
        self
    }

    pub fn mode(&self) -> OracleMode {
        self.mode
    }

    pub fn bias(&self) -> f64 {
        self.b
    }

    /// The hidden normal. Test and harness use only.
    pub fn hidden(&self) -> &DVector<f64> {
        &self.h
    }

    pub fn floor_for(&self, q: &DVector<f64>) -> f64 {
        if self.b == 0.0 {
            self.floor_rel * q.norm() * self.h.norm()
        } else {
            self.floor_rel * (q.norm_squared() + 1.0).sqrt() * (self.h.norm_squared() + self.b * self.b).sqrt()
        }
    }

    /// Ground truth without spending budget.
    pub fn truth(&self, q: &DVector<f64>) -> Sign {
        let s = floored_sign(q.dot(&self.h) + self.b, self.floor_for(q));
        match (self.mode, s) {
            (OracleMode::Binary, Sign::Zero) => Sign::Pos,
            _ => s,
        }
    }
}

impl SignOracle for QueryOracle {
    fn dim(&self) -> usize {
        self.h.len()
    }

    fn sign(&mut self, q: &DVector<f64>) -> Result<Sign> {
        if q.len() != self.h.len() {
            return Err(Error::DimensionMismatch { expected: self.h.len(), got: q.len() });
        }
        if let Some(budget) = self.budget {
            if self.used >= budget {
                return Err(Error::BudgetExhausted { used: self.used, budget });
            }
        }
        self.used += 1;
        Ok(self.truth(q))
    }

    fn queries(&self) -> u64 {
        self.used
    }

    fn note_margin_call(&mut self) {
        self.margin_calls += 1;
    }

    fn margin_calls(&self) -> u64 {
        self.margin_calls
    }
}

/// Queries expressed in local coordinates `q` are sent as `map * q`.
pub struct FramedOracle<'a> {
    inner: &'a mut dyn SignOracle,
    map: &'a DMatrix<f64>,
}

impl<'a> FramedOracle<'a> {
    pub fn new(inner: &'a mut dyn SignOracle, map: &'a DMatrix<f64>) -> Result<Self> {
        if map.nrows() != inner.dim() {
            return Err(Error::DimensionMismatch { expected: inner.dim(), got: map.nrows() });
        }
        Ok(Self { inner, map })
    }
}

impl SignOracle for FramedOracle<'_> {
    fn dim(&self) -> usize {
        self.map.ncols()
    }

    fn sign(&mut self, q: &DVector<f64>) -> Result<Sign> {
        if q.len() != self.map.ncols() {
            return Err(Error::DimensionMismatch { expected: self.map.ncols(), got: q.len() });
        }
        let lifted = self.map * q;
        self.inner.sign(&lifted)
    }

    fn queries(&self) -> u64 {
        self.inner.queries()
    }

    fn note_margin_call(&mut self) {
        self.inner.note_margin_call()
    }

    fn margin_calls(&self) -> u64 {
        self.inner.margin_calls()
    }
}

/// Enforces a local query cap on top of whatever the inner oracle does.
pub struct CappedOracle<'a> {
    inner: &'a mut dyn SignOracle,
    start: u64,
    cap: u64,
    hit: bool,
}

impl<'a> CappedOracle<'a> {
    pub fn new(inner: &'a mut dyn SignOracle, cap: u64) -> Self {
        let start = inner.queries();
        Self { inner, start, cap, hit: false }
    }

    pub fn cap_hit(&self) -> bool {
        self.hit
    }

    pub fn spent(&self) -> u64 {
        self.inner.queries() - self.start
    }
}

impl SignOracle for CappedOracle<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn sign(&mut self, q: &DVector<f64>) -> Result<Sign> {
        let spent = self.spent();
        if spent >= self.cap {
            self.hit = true;
            return Err(Error::BudgetExhausted { used: spent, budget: self.cap });
        }
        self.inner.sign(q)
    }

    fn queries(&self) -> u64 {
        self.inner.queries()
    }

    fn note_margin_call(&mut self) {
        self.inner.note_margin_call()
    }

    fn margin_calls(&self) -> u64 {
        self.inner.margin_calls()
    }
}

/// `<x, h> / ||h||`.
pub fn normalized_margin(x: &DVector<f64>, h: &DVector<f64>) -> f64 {
    x.dot(h) / h.norm()
}

/// `sqrt(sum m(x, h)^2)` over the columns `idx` of `points`.
pub fn margin_norm(points: &DMatrix<f64>, idx: &[usize], h: &DVector<f64>) -> f64 {
    let hn = h.norm();
    idx.iter()
        .map(|&i| {
            let m = points.column(i).dot(h) / hn;
            m * m
        })
        .sum::<f64>()
        .sqrt()
}

/// Gaussian margin oracle: `sum g_i x_i` with `g_i ~ N(0, 1)`.
pub fn gaussian_combination<R: Rng>(points: &DMatrix<f64>, idx: &[usize], rng: &mut R) -> DVector<f64> {
    let mut out = DVector::zeros(points.nrows());
    for &i in idx {
        let g: f64 = rng.sample(StandardNormal);
        out.axpy(g, &points.column(i), 1.0);
    }
    out
}

/// Compares `|<x, h>|` with `|<y, h>|` using two queries.
pub fn compare_abs_margin(oracle: &mut dyn SignOracle, x: &DVector<f64>, y: &DVector<f64>) -> Result<Ordering> {
    let s = oracle.sign(&(x + y))?;
    let t = oracle.sign(&(x - y))?;
    Ok(match s.mul(t) {
        Sign::Pos => Ordering::Greater,
        Sign::Zero => Ordering::Equal,
        Sign::Neg => Ordering::Less,
    })
}

/// Whether `|<a, h>| > ell * |<b, h>|`.
pub fn check_gap(oracle: &mut dyn SignOracle, a: &DVector<f64>, b: &DVector<f64>, ell: f64) -> Result<bool> {
    Ok(compare_abs_margin(oracle, a, &(b * ell))? == Ordering::Greater)
}

/// Index of a median of `|<c, h>|` over the candidates; ties go to the
/// lowest index. Deterministic linear-time selection with memoized
/// comparisons.
pub fn median_abs_margin(oracle: &mut dyn SignOracle, candidates: &[DVector<f64>]) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("median of empty candidate list".into()));
    }
    let n = candidates.len();
    let mut memo: Vec<Option<Ordering>> = vec![None; n * n];
    let mut abs_cmp = |a: usize, b: usize| -> Result<Ordering> {
        if a == b {
            return Ok(Ordering::Equal);
        }
        let (lo, hi, flip) = if a < b { (a, b, false) } else { (b, a, true) };
        let ord = match memo[lo * n + hi] {
            Some(o) => o,
            None => {
                let o = compare_abs_margin(oracle, &candidates[lo], &candidates[hi])?;
                memo[lo * n + hi] = Some(o);
                o
            }
        };
        Ok(if flip { ord.reverse() } else { ord })
    };
    let mut idx: Vec<usize> = (0..candidates.len()).collect();
    let k = (candidates.len() - 1) / 2;
    let mut total = |a: usize, b: usize| -> Result<Ordering> { Ok(abs_cmp(a, b)?.then(a.cmp(&b))) };
    let chosen = select(&mut idx, k, &mut total)?;
    for j in 0..chosen {
        if abs_cmp(j, chosen)? == Ordering::Equal {
            return Ok(j);
        }
    }
    Ok(chosen)
}

/// Median-of-medians selection of the element with rank `k` (0-based).
fn select<F>(items: &mut [usize], k: usize, cmp: &mut F) -> Result<usize>
where
    F: FnMut(usize, usize) -> Result<Ordering>,
{
    if items.len() <= 5 {
        insertion_sort(items, cmp)?;
        return Ok(items[k]);
    }
    let mut medians = Vec::with_capacity(items.len() / 5 + 1);
    for chunk in items.chunks_mut(5) {
        insertion_sort(chunk, cmp)?;
        medians.push(chunk[(chunk.len() - 1) / 2]);
    }
    let mid = (medians.len() - 1) / 2;
    let pivot = select(&mut medians, mid, cmp)?;
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for &x in items.iter() {
        if x == pivot {
            continue;
        }
        match cmp(x, pivot)? {
            Ordering::Less => lower.push(x),
            _ => upper.push(x),
        }
    }
    match k.cmp(&lower.len()) {
        Ordering::Less => select(&mut lower, k, cmp),
        Ordering::Equal => Ok(pivot),
        Ordering::Greater => select(&mut upper, k - lower.len() - 1, cmp),
    }
}

fn insertion_sort<F>(items: &mut [usize], cmp: &mut F) -> Result<()>
where
    F: FnMut(usize, usize) -> Result<Ordering>,
{
    for i in 1..items.len() {
        let mut j = i;
        while j > 0 && cmp(items[j - 1], items[j])? == Ordering::Greater {
            items.swap(j - 1, j);
            j -= 1;
        }
    }
    Ok(())
}

/// Estimates `<w, h> / <x_ref, h>` to within `tol` by bisection on the sign
/// of `<w - alpha x_ref, h>`. `s_ref` must be the sign of `<x_ref, h>`.
pub fn relative_margin_search(
    oracle: &mut dyn SignOracle,
    w: &DVector<f64>,
    x_ref: &DVector<f64>,
    s_ref: Sign,
    tol: f64,
    cap: f64,
) -> Result<f64> {
    search_with_escape(oracle, w, x_ref, s_ref, tol, cap, 0)
}

/// As [`relative_margin_search`], but a failed endpoint doubles the range
/// (re-querying only that endpoint) up to `max_doublings` times.
pub fn search_with_escape(
    oracle: &mut dyn SignOracle,
    w: &DVector<f64>,
    x_ref: &DVector<f64>,
    s_ref: Sign,
    tol: f64,
    cap: f64,
    max_doublings: u32,
) -> Result<f64> {
    if s_ref == Sign::Zero {
        return Err(Error::InvalidInput("reference point has zero margin".into()));
    }
    if !(tol > 0.0 && cap > 0.0) {
        return Err(Error::InvalidInput("tolerance and range must be positive".into()));
    }
    let mut probe = |alpha: f64| -> Result<Sign> { Ok(s_ref.mul(oracle.sign(&(w - x_ref * alpha))?)) };

    let mut hi = cap;
    let mut doublings = 0;
    loop {
        match probe(hi)? {
            Sign::Zero => return Ok(hi),
            Sign::Neg => break,
            Sign::Pos if doublings < max_doublings => {
                hi *= 2.0;
                doublings += 1;
            }
            Sign::Pos => return Err(Error::RangeExceeded { cap: hi, side: "upper" }),
        }
    }
    let mut lo = -cap;
    loop {
        match probe(lo)? {
            Sign::Zero => return Ok(lo),
            Sign::Pos => break,
            Sign::Neg if doublings < max_doublings => {
                lo *= 2.0;
                doublings += 1;
            }
            Sign::Neg => return Err(Error::RangeExceeded { cap: -lo, side: "lower" }),
        }
    }
    while hi - lo > 2.0 * tol {
        let mid = 0.5 * (lo + hi);
        match probe(mid)? {
            Sign::Pos => lo = mid,
            Sign::Neg => hi = mid,
            Sign::Zero => return Ok(mid),
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Number of queries a non-escaping search may use.
pub fn search_query_bound(tol: f64, cap: f64) -> u64 {
    (2.0 * cap / tol).log2().ceil().max(0.0) as u64 + 2
}

/// `x -> (x, 1) / ||(x, 1)||`.
pub fn lift_point(x: &DVector<f64>) -> DVector<f64> {
    let d = x.len();
    let mut out = DVector::zeros(d + 1);
    out.rows_mut(0, d).copy_from(x);
    out[d] = 1.0;
    let n = out.norm();
    out / n
}

/// Lifts every column and returns the `(d + 1) x n` matrix.
pub fn lift_instance(points: &DMatrix<f64>) -> DMatrix<f64> {
    let (d, n) = points.shape();
    let mut out = DMatrix::zeros(d + 1, n);
    for i in 0..n {
        out.set_column(i, &lift_point(&points.column(i).into_owned()));
    }
    out
}

/// Relative step used in place of a zero lifting coefficient.
pub const LIFT_ZERO_STEP: f64 = 1e-15;

/// `sign(alpha) * sign(<x / alpha, h> + b)` using one binary base query.
pub fn lifted_query(base: &mut QueryOracle, x: &DVector<f64>, alpha: f64) -> Result<Sign> {
    if base.mode() != OracleMode::Binary {
        return Err(Error::InvalidInput("lifted queries need a binary oracle".into()));
    }
    let alpha = if alpha == 0.0 { LIFT_ZERO_STEP } else { alpha };
    let s = base.sign(&(x / alpha))?;
    Ok(Sign::of(alpha).mul(s))
}

/// Homogeneous view of a non-homogeneous binary oracle in one extra
/// dimension.
#[derive(Debug, Clone)]
pub struct LiftedOracle {
    base: QueryOracle,
}

impl LiftedOracle {
    pub fn new(h: DVector<f64>, b: f64) -> Self {
        Self { base: QueryOracle::with_bias(h, b).binary() }
    }

    pub fn from_base(base: QueryOracle) -> Result<Self> {
        if base.mode() != OracleMode::Binary {
            return Err(Error::InvalidInput("lifted oracle needs a binary base".into()));
        }
        Ok(Self { base })
    }

    pub fn base(&self) -> &QueryOracle {
        &self.base
    }

    /// Lifted normal `(h, b)`. Test and harness use only.
    pub fn hidden(&self) -> DVector<f64> {
        let h = self.base.hidden();
        let d = h.len();
        let mut out = DVector::zeros(d + 1);
        out.rows_mut(0, d).copy_from(h);
        out[d] = self.base.bias();
        out
    }
}

impl SignOracle for LiftedOracle {
    fn dim(&self) -> usize {
        self.base.dim() + 1
    }

    fn sign(&mut self, q: &DVector<f64>) -> Result<Sign> {
        let d = self.base.dim();
        if q.len() != d + 1 {
            return Err(Error::DimensionMismatch { expected: d + 1, got: q.len() });
        }
        let x = q.rows(0, d).into_owned();
        lifted_query(&mut self.base, &x, q[d])
    }

    fn queries(&self) -> u64 {
        self.base.queries()
    }

    fn note_margin_call(&mut self) {
        self.base.note_margin_call()
    }

    fn margin_calls(&self) -> u64 {
        self.base.margin_calls()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn sign_algebra() {
        assert_eq!(Sign::of(-0.0), Sign::Zero);
        assert_eq!(Sign::Neg.mul(Sign::Neg), Sign::Pos);
        assert_eq!(Sign::Pos.mul(Sign::Zero), Sign::Zero);
        assert_eq!(Sign::Neg.flip(), Sign::Pos);
        assert_eq!(floored_sign(1e-13, 1e-12), Sign::Zero);
        assert_eq!(floored_sign(-2e-12, 1e-12), Sign::Neg);
    }

    #[test]
    fn weighted_set_normalizes() {
        let pts = DMatrix::from_column_slice(2, 2, &[3.0, 4.0, 0.0, -2.0]);
        let s = WeightedSet::new(pts, vec![1.0, 3.0]).unwrap();
        assert_eq!(s.weights(), &[0.25, 0.75]);
        assert!((s.point(0) - v(&[0.6, 0.8])).norm() < 1e-15);
        assert!((s.point(1) - v(&[0.0, -1.0])).norm() < 1e-15);
        assert!((s.mass(&[1]) - 0.75).abs() < 1e-15);
        let r = s.restrict(&[1]).unwrap();
        assert_eq!(r.weights(), &[1.0]);
    }

    #[test]
    fn weighted_set_rejects_bad_input() {
        let pts = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(WeightedSet::uniform(pts).is_err());
        let pts = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert!(WeightedSet::new(pts.clone(), vec![0.0]).is_err());
        assert!(matches!(WeightedSet::new(pts, vec![1.0, 1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn oracle_counts_and_budget() {
        let mut o = QueryOracle::new(v(&[1.0, 0.0])).with_budget(2);
        assert_eq!(o.sign(&v(&[2.0, 5.0])).unwrap(), Sign::Pos);
        assert_eq!(o.sign(&v(&[0.0, 5.0])).unwrap(), Sign::Zero);
        assert!(matches!(o.sign(&v(&[1.0, 1.0])), Err(Error::BudgetExhausted { used: 2, budget: 2 })));
        assert_eq!(o.queries(), 2);
        assert!(o.sign(&v(&[1.0])).is_err());
    }

    #[test]
    fn relative_floor() {
        let o = QueryOracle::new(v(&[1.0, 0.0]));
        assert_eq!(o.truth(&v(&[1e-13, 1.0])), Sign::Zero);
        assert_eq!(o.truth(&v(&[1e-11, 1.0])), Sign::Pos);
        assert_eq!(o.truth(&v(&[1e-11, 1e3])), Sign::Zero);
        let b = QueryOracle::new(v(&[1.0, 0.0])).binary();
        assert_eq!(b.truth(&v(&[0.0, 1.0])), Sign::Pos);
    }

    #[test]
    fn capped_oracle_stops() {
        let mut base = QueryOracle::new(v(&[1.0]));
        base.sign(&v(&[1.0])).unwrap();
        let mut c = CappedOracle::new(&mut base, 1);
        c.sign(&v(&[1.0])).unwrap();
        assert!(c.sign(&v(&[1.0])).is_err());
        assert!(c.cap_hit());
        assert_eq!(c.spent(), 1);
    }

    #[test]
    fn framed_oracle_maps_queries() {
        let mut base = QueryOracle::new(v(&[0.0, 0.0, 1.0]));
        let map = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, -2.0]);
        let mut f = FramedOracle::new(&mut base, &map).unwrap();
        assert_eq!(f.dim(), 1);
        assert_eq!(f.sign(&v(&[1.0])).unwrap(), Sign::Neg);
        assert!(FramedOracle::new(&mut base, &DMatrix::zeros(2, 1)).is_err());
    }

    #[test]
    fn margins() {
        let h = v(&[3.0, 4.0]);
        assert!((normalized_margin(&v(&[1.0, 0.0]), &h) - 0.6).abs() < 1e-15);
        let pts = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!((margin_norm(&pts, &[0, 1], &h) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn search_bound_values() {
        // ceil(log2(2 * 10 / 1e-3)) = ceil(14.29) = 15
        assert_eq!(search_query_bound(1e-3, 10.0), 17);
        assert_eq!(search_query_bound(0.5, 1.0), 4);
    }

    #[test]
    fn search_range_errors() {
        let mut o = QueryOracle::new(v(&[1.0, 0.0]));
        let r = relative_margin_search(&mut o, &v(&[5.0, 0.0]), &v(&[1.0, 0.0]), Sign::Pos, 1e-3, 2.0);
        assert!(matches!(r, Err(Error::RangeExceeded { side: "upper", .. })));
        let r = search_with_escape(&mut o, &v(&[5.0, 0.0]), &v(&[1.0, 0.0]), Sign::Pos, 1e-3, 2.0, 2);
        assert!((r.unwrap() - 5.0).abs() <= 1e-3);
        let r = relative_margin_search(&mut o, &v(&[5.0, 0.0]), &v(&[0.0, 1.0]), Sign::Zero, 1e-3, 2.0);
        assert!(r.is_err());
    }

    #[test]
    fn median_matches_sort() {
        let h = v(&[1.0, 0.0]);
        let mags = [5.0, -1.0, 3.0, -4.0, 2.0, 9.0, -7.0];
        let cands: Vec<_> = mags.iter().map(|&m| v(&[m, 1.0])).collect();
        let mut o = QueryOracle::new(h);
        let i = median_abs_margin(&mut o, &cands).unwrap();
        assert_eq!(mags[i], 4.0_f64.copysign(mags[i]));
        assert!(median_abs_margin(&mut o, &[]).is_err());
    }

    #[test]
    fn median_ties_pick_lowest_index() {
        let cands: Vec<_> = [2.0, 2.0, -2.0].iter().map(|&m| v(&[m])).collect();
        let mut o = QueryOracle::new(v(&[1.0]));
        assert_eq!(median_abs_margin(&mut o, &cands).unwrap(), 0);
    }

    #[test]
    fn lift_values() {
        let l = lift_point(&v(&[3.0, 4.0]));
        let s = 26f64.sqrt();
        assert!((l - v(&[3.0 / s, 4.0 / s, 1.0 / s])).norm() < 1e-15);
        let m = lift_instance(&DMatrix::from_column_slice(1, 2, &[0.0, 1.0]));
        assert_eq!(m.shape(), (2, 2));
        assert!((m[(1, 1)] - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn lifted_oracle_needs_binary_base() {
        assert!(LiftedOracle::from_base(QueryOracle::new(v(&[1.0]))).is_err());
        let mut o = LiftedOracle::new(v(&[1.0, 0.0]), -0.5);
        assert_eq!(o.dim(), 3);
        assert_eq!(o.hidden(), v(&[1.0, 0.0, -0.5]));
        assert_eq!(o.sign(&v(&[1.0, 0.0, 1.0])).unwrap(), Sign::Pos);
        assert_eq!(o.sign(&v(&[1.0, 0.0, 3.0])).unwrap(), Sign::Neg);
        assert_eq!(o.sign(&v(&[-1.0, 0.0, -1.0])).unwrap(), Sign::Neg);
        assert_eq!(o.queries(), 3);
    }

    #[test]
    fn gaussian_combination_stays_in_span() {
        let pts = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = gaussian_combination(&pts, &[0, 1, 1], &mut rng);
        assert_eq!(g[2], 0.0);
        assert!(g.norm() > 0.0);
    }

    fn vec_in(d: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0..10.0f64, d)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn compare_matches_truth(h in vec_in(4), x in vec_in(4), y in vec_in(4)) {
            let (h, x, y) = (v(&h), v(&x), v(&y));
            let (a, b) = (x.dot(&h).abs(), y.dot(&h).abs());
            prop_assume!(h.norm() > 1e-3 && (a - b).abs() > 1e-6 * (1.0 + a + b));
            let mut o = QueryOracle::new(h);
            prop_assert_eq!(compare_abs_margin(&mut o, &x, &y).unwrap(), a.partial_cmp(&b).unwrap());
            prop_assert_eq!(o.queries(), 2);
        }

        #[test]
        fn search_within_tolerance(h in vec_in(3), w in vec_in(3), r in vec_in(3), tol in 1e-4..0.1f64) {
            let (h, w, r) = (v(&h), v(&w), v(&r));
            let mr = r.dot(&h);
            prop_assume!(mr.abs() > 1e-2 * h.norm() * r.norm());
            let ratio = w.dot(&h) / mr;
            let cap = ratio.abs() + 1.0;
            let mut o = QueryOracle::new(h);
            let est = relative_margin_search(&mut o, &w, &r, Sign::of(mr), tol, cap).unwrap();
            prop_assert!((est - ratio).abs() <= tol * (1.0 + 1e-9) + 1e-9);
            prop_assert!(o.queries() <= search_query_bound(tol, cap));
        }

        #[test]
        fn median_has_balanced_rank(ms in prop::collection::vec(-100.0..100.0f64, 1..40)) {
            let cands: Vec<_> = ms.iter().map(|&m| v(&[m, 0.5])).collect();
            let mut o = QueryOracle::new(v(&[1.0, 0.0]));
            let i = median_abs_margin(&mut o, &cands).unwrap();
            let pivot = ms[i].abs();
            let below = ms.iter().filter(|m| m.abs() < pivot).count();
            let above = ms.iter().filter(|m| m.abs() > pivot).count();
            let k = (ms.len() - 1) / 2;
            prop_assert!(below <= k && above <= ms.len() - 1 - k);
        }

        #[test]
        fn lifted_sign_is_affine_sign(h in vec_in(3), b in -5.0..5.0f64, x in vec_in(3), a in 0.1..10.0f64, neg in any::<bool>()) {
            let (h, x) = (v(&h), v(&x));
            let alpha = if neg { -a } else { a };
            let val = x.dot(&h) + alpha * b;
            prop_assume!(val.abs() > 1e-6 * (1.0 + h.norm() * (x.norm() + alpha.abs())));
            let q = x.insert_row(3, alpha);
            let mut o = LiftedOracle::new(h, b);
            prop_assert_eq!(o.sign(&q).unwrap(), Sign::of(val));
        }
    }
}
