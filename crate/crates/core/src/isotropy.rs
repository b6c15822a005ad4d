//! Radial isotropic position: covariance, Forster's fixed-point iteration,
//! heavy-subspace witnesses and the recursive dense-subspace search.

use crate::error::{Error, Result};
use crate::geometry_oracle::WeightedSet;
use crate::linalg::{distance_to_span, inv_sqrt, orthonormal_span, sym_eigen_desc, EIG_ZERO, SPAN_TOL};
use nalgebra::{DMatrix, DVector};

pub const BRUTE_MAX_N: usize = 16;
pub const BRUTE_MAX_D: usize = 8;
const MASS_TOL: f64 = 1e-12;
const STALL_WINDOW: usize = 100;
const STALL_GAIN: f64 = 1e-3;
const MEMBER_THRESHOLDS: [f64; 7] = [1e-12, 1e-9, 1e-6, 1e-3, 1e-2, 0.05, 0.2];
const EIG_MASS_SLACK: f64 = 0.05;
/// Converged transforms worse conditioned than this defer to a heavy
/// witness when one exists.
pub const MAX_CONDITION: f64 = 1e4;

/// `x -> T B^T x / ||T B^T x||` for an orthonormal `B` (d x k) and
/// invertible `T` (k x k).
#[derive(Debug, Clone)]
pub struct IsotropicTransform {
    pub basis: DMatrix<f64>,
    pub map: DMatrix<f64>,
    pub residual: f64,
}

impl IsotropicTransform {
    pub fn identity(d: usize) -> Self {
        Self { basis: DMatrix::identity(d, d), map: DMatrix::identity(d, d), residual: f64::NAN }
    }

    pub fn local_dim(&self) -> usize {
        self.map.nrows()
    }

    pub fn local_raw(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.map * (self.basis.transpose() * x)
    }

    /// `||T B^T x||`.
    pub fn local_norm(&self, x: &DVector<f64>) -> f64 {
        self.local_raw(x).norm()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let y = self.local_raw(x);
        let n = y.norm();
        y / n
    }

    /// `B T^{-1}`: sends a local query to the ambient one with the same sign
    /// pattern on transformed points.
    pub fn query_map(&self) -> DMatrix<f64> {
        let inv = self.map.clone().try_inverse().expect("invertible transform");
        &self.basis * inv
    }

    /// Transformed, renormalized copy of `set` restricted to `idx`.
    pub fn transform_set(&self, set: &WeightedSet, idx: &[usize]) -> Result<WeightedSet> {
        let k = self.local_dim();
        let mut pts = DMatrix::zeros(k, idx.len());
        for (c, &i) in idx.iter().enumerate() {
            pts.set_column(c, &self.local_raw(&set.point(i)));
        }
        let w = idx.iter().map(|&i| set.weights()[i]).collect();
        WeightedSet::new(pts, w)
    }
}

#[derive(Debug, Clone)]
pub struct SubspaceWitness {
    /// Orthonormal basis (d x k).
    pub basis: DMatrix<f64>,
    /// Points lying in the subspace.
    pub members: Vec<usize>,
    pub mass: f64,
}

impl SubspaceWitness {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `mass - k / d` for ambient dimension `d`.
    pub fn excess(&self) -> f64 {
        self.mass - self.dim() as f64 / self.basis.nrows() as f64
    }
}

#[derive(Debug, Clone)]
pub enum ForsterOutcome {
    Success(IsotropicTransform),
    HeavySubspace(SubspaceWitness),
    /// Iteration budget spent with neither convergence nor a witness.
    Stalled(IsotropicTransform),
}

pub fn covariance(set: &WeightedSet) -> DMatrix<f64> {
    weighted_cov(set.points(), set.weights())
}

fn weighted_cov(points: &DMatrix<f64>, weights: &[f64]) -> DMatrix<f64> {
    let mut scaled = points.clone();
    for (mut c, w) in scaled.column_iter_mut().zip(weights) {
        c *= w.sqrt();
    }
    &scaled * scaled.transpose()
}

/// `max_i |d lambda_i - 1|` over the eigenvalues of a covariance.
pub fn isotropy_residual(eigenvalues: &[f64]) -> f64 {
    let d = eigenvalues.len() as f64;
    eigenvalues.iter().map(|l| (d * l - 1.0).abs()).fold(0.0, f64::max)
}

pub fn is_eps_isotropic(set: &WeightedSet, eps: f64) -> bool {
    let (vals, _) = sym_eigen_desc(&covariance(set));
    isotropy_residual(&vals) <= eps
}

pub fn forster_transform(set: &WeightedSet, eps: f64, max_iter: usize) -> ForsterOutcome {
    let d = set.dim();
    let w = set.weights();
    let mut y = set.points().clone();
    let mut t = DMatrix::<f64>::identity(d, d);
    let mut best = f64::INFINITY;
    let mut best_t = t.clone();
    let mut last_gain = 0;

    for it in 0..=max_iter {
        let (vals, vecs) = sym_eigen_desc(&weighted_cov(&y, w));
        let res = isotropy_residual(&vals);
        if res <= eps {
            if condition(&t) > MAX_CONDITION {
                if let Some(wit) = detect_heavy(set, &t, &y, &vals, &vecs) {
                    return ForsterOutcome::HeavySubspace(wit);
                }
            }
            return ForsterOutcome::Success(finish(t, res));
        }
        if res < best * (1.0 - STALL_GAIN) {
            last_gain = it;
        }
        if res < best {
            best = res;
            best_t = t.clone();
        }
        let degenerate = vals[d - 1] <= EIG_ZERO;
        if degenerate || it - last_gain >= STALL_WINDOW || it == max_iter {
            if let Some(wit) = detect_heavy(set, &t, &y, &vals, &vecs) {
                return ForsterOutcome::HeavySubspace(wit);
            }
            if degenerate || it == max_iter {
                break;
            }
            last_gain = it;
        }
        let s = inv_sqrt(&vals, &vecs);
        t = &s * t;
        let scale = t.norm();
        t /= scale;
        y = &s * y;
        for mut c in y.column_iter_mut() {
            let n = c.norm();
            c /= n;
        }
    }

    if set.len() <= BRUTE_MAX_N && d <= BRUTE_MAX_D {
        if let Ok(Some(wit)) = heavy_subspace_witness(set, true) {
            return ForsterOutcome::HeavySubspace(wit);
        }
    }
    ForsterOutcome::Stalled(finish(best_t, best))
}

/// Ratio of extreme singular values.
pub fn condition(t: &DMatrix<f64>) -> f64 {
    let sv = t.clone().singular_values();
    sv.max() / sv.min()
}

fn finish(mut t: DMatrix<f64>, residual: f64) -> IsotropicTransform {
    let d = t.nrows();
    let top = t.clone().singular_values().max();
    t /= top;
    IsotropicTransform { basis: DMatrix::identity(d, d), map: t, residual }
}

/// Looks for a heavy subspace near the top eigenspaces of the transformed
/// covariance and near the most contracted directions of `t`, then confirms
/// it exactly on the original points.
fn detect_heavy(
    set: &WeightedSet,
    t: &DMatrix<f64>,
    y: &DMatrix<f64>,
    vals: &[f64],
    vecs: &DMatrix<f64>,
) -> Option<SubspaceWitness> {
    let d = set.dim();
    if let Some(w) = confirm_witness(set, &(0..set.len()).collect::<Vec<_>>()) {
        return Some(w);
    }
    let (tv, tvecs) = sym_eigen_desc(&(t.transpose() * t));
    if tv[0] > 0.0 && tv[d - 1] < tv[0] * 1e-4 {
        for k in 1..d {
            let e = tvecs.columns(d - k, k).into_owned();
            let dist: Vec<f64> = set.points().column_iter().map(|c| distance_to_span(&e, &c.into_owned())).collect();
            if let Some(w) = threshold_members(set, &dist, k) {
                return Some(w);
            }
        }
    }
    let mut cum = 0.0;
    let mut ks: Vec<(usize, f64)> = Vec::new();
    for (k, v) in vals.iter().enumerate().take(d - 1) {
        cum += v;
        ks.push((k + 1, cum - (k + 1) as f64 / d as f64));
    }
    ks.sort_by(|a, b| {
        let pa = a.1 > EIG_MASS_SLACK;
        let pb = b.1 > EIG_MASS_SLACK;
        pb.cmp(&pa).then(a.0.cmp(&b.0))
    });
    for (k, _) in ks {
        let e = vecs.columns(0, k).into_owned();
        let dist: Vec<f64> = y.column_iter().map(|c| distance_to_span(&e, &c.into_owned())).collect();
        if let Some(w) = threshold_members(set, &dist, k) {
            return Some(w);
        }
    }
    None
}

fn threshold_members(set: &WeightedSet, dist: &[f64], k: usize) -> Option<SubspaceWitness> {
    let d = set.dim();
    let mut last_len = usize::MAX;
    for thr in MEMBER_THRESHOLDS {
        let members: Vec<usize> = (0..set.len()).filter(|&i| dist[i] <= thr).collect();
        if members.len() == last_len || members.is_empty() {
            continue;
        }
        last_len = members.len();
        if set.mass(&members) <= k as f64 / d as f64 {
            continue;
        }
        if let Some(w) = confirm_witness(set, &members) {
            return Some(w);
        }
    }
    None
}

/// Span of `members` on the original points, if it is a proper subspace
/// carrying more than its share of mass.
fn confirm_witness(set: &WeightedSet, members: &[usize]) -> Option<SubspaceWitness> {
    let d = set.dim();
    let basis = orthonormal_span(&set.points().select_columns(members), SPAN_TOL);
    let k = basis.ncols();
    if k == 0 || k >= d {
        return None;
    }
    let wit = witness_for(set, basis);
    (wit.mass > k as f64 / d as f64 + MASS_TOL).then_some(wit)
}

fn witness_for(set: &WeightedSet, basis: DMatrix<f64>) -> SubspaceWitness {
    let members: Vec<usize> = (0..set.len()).filter(|&i| distance_to_span(&basis, &set.point(i)) <= SPAN_TOL).collect();
    let mass = set.mass(&members);
    SubspaceWitness { basis, members, mass }
}

fn check_brute_size(set: &WeightedSet) -> Result<()> {
    if set.len() > BRUTE_MAX_N || set.dim() > BRUTE_MAX_D {
        return Err(Error::SizeLimitExceeded { n: set.len(), d: set.dim(), max_n: BRUTE_MAX_N, max_d: BRUTE_MAX_D });
    }
    Ok(())
}

/// Visits the span of every linearly independent subset of size 1..d-1.
fn for_each_span<F: FnMut(SubspaceWitness) -> bool>(set: &WeightedSet, mut f: F) {
    let n = set.len();
    let d = set.dim();
    let mut idx = Vec::new();
    fn rec<F: FnMut(SubspaceWitness) -> bool>(
        set: &WeightedSet,
        start: usize,
        idx: &mut Vec<usize>,
        n: usize,
        d: usize,
        f: &mut F,
    ) -> bool {
        if !idx.is_empty() {
            let basis = orthonormal_span(&set.points().select_columns(idx.as_slice()), SPAN_TOL);
            if basis.ncols() < idx.len() {
                return true;
            }
            if !f(witness_for(set, basis)) {
                return false;
            }
        }
        if idx.len() + 1 >= d {
            return true;
        }
        for i in start..n {
            idx.push(i);
            let go = rec(set, i + 1, idx, n, d, f);
            idx.pop();
            if !go {
                return false;
            }
        }
        true
    }
    rec(set, 0, &mut idx, n, d, &mut f);
}

/// Brute-force search over point-spanned subspaces for one with
/// `mass > k/d` (`strict`) or `mass >= k/d`. Returns the one with the
/// largest excess.
pub fn heavy_subspace_witness(set: &WeightedSet, strict: bool) -> Result<Option<SubspaceWitness>> {
    check_brute_size(set)?;
    let d = set.dim();
    let mut best: Option<SubspaceWitness> = None;
    let whole = orthonormal_span(set.points(), SPAN_TOL);
    if whole.ncols() < d {
        return Ok(Some(witness_for(set, whole)));
    }
    for_each_span(set, |w| {
        let share = w.dim() as f64 / d as f64;
        let heavy = if strict { w.mass > share + MASS_TOL } else { w.mass >= share - MASS_TOL };
        if heavy && best.as_ref().is_none_or(|b| w.excess() > b.excess()) {
            best = Some(w);
        }
        true
    });
    Ok(best)
}

/// Exact feasibility of radial isotropic position: every point-spanned
/// k-subspace has mass below k/d, or exactly k/d with the remaining points
/// inside a (d-k)-dimensional subspace.
pub fn exact_isotropic_feasible(set: &WeightedSet) -> Result<bool> {
    check_brute_size(set)?;
    let d = set.dim();
    if orthonormal_span(set.points(), SPAN_TOL).ncols() < d {
        return Ok(false);
    }
    let mut ok = true;
    for_each_span(set, |w| {
        let k = w.dim();
        let share = k as f64 / d as f64;
        if w.mass > share + MASS_TOL {
            ok = false;
        } else if w.mass >= share - MASS_TOL {
            let rest: Vec<usize> = (0..set.len()).filter(|i| !w.members.contains(i)).collect();
            let rest_dim = orthonormal_span(&set.points().select_columns(&rest), SPAN_TOL).ncols();
            if rest_dim > d - k {
                ok = false;
            }
        }
        ok
    });
    Ok(ok)
}

#[derive(Debug, Clone)]
pub struct DenseSubspace {
    pub witness: SubspaceWitness,
    pub transform: IsotropicTransform,
    /// Forster stalled on the final subspace; `transform` is its best iterate.
    pub stalled: bool,
}

/// Recursively descends into heavy subspaces until Forster's iteration
/// succeeds, returning a subspace `V` with `mass(V) >= dim(V)/d` and an
/// `eps`-isotropic transform of the points inside it.
pub fn dense_isotropic_subspace(set: &WeightedSet, eps: f64, max_iter: usize) -> Result<DenseSubspace> {
    let d = set.dim();
    let mut basis = DMatrix::<f64>::identity(d, d);
    let mut members: Vec<usize> = (0..set.len()).collect();
    loop {
        let k = basis.ncols();
        let local = local_set(set, &basis, &members)?;
        let (outcome, stalled) = if k == 1 {
            (ForsterOutcome::Success(IsotropicTransform { residual: 0.0, ..IsotropicTransform::identity(1) }), false)
        } else {
            let o = forster_transform(&local, eps, max_iter);
            let s = matches!(o, ForsterOutcome::Stalled(_));
            (o, s)
        };
        match outcome {
            ForsterOutcome::Success(t) | ForsterOutcome::Stalled(t) => {
                let mass = set.mass(&members);
                let transform = IsotropicTransform { basis: &basis * &t.basis, map: t.map, residual: t.residual };
                let basis = transform.basis.clone();
                return Ok(DenseSubspace { witness: SubspaceWitness { basis, members, mass }, transform, stalled });
            }
            ForsterOutcome::HeavySubspace(w) => {
                basis = &basis * &w.basis;
                members = w.members.iter().map(|&i| members[i]).collect();
            }
        }
    }
}

/// Points of `members` in the coordinates of an orthonormal `basis`.
fn local_set(set: &WeightedSet, basis: &DMatrix<f64>, members: &[usize]) -> Result<WeightedSet> {
    let pts = basis.transpose() * set.points().select_columns(members);
    let w = members.iter().map(|&i| set.weights()[i]).collect();
    WeightedSet::new(pts, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(d: usize, cols: &[f64], w: &[f64]) -> WeightedSet {
        WeightedSet::new(DMatrix::from_column_slice(d, w.len(), cols), w.to_vec()).unwrap()
    }

    #[test]
    fn residual_values() {
        assert_eq!(isotropy_residual(&[0.5, 0.25, 0.25]), 0.5);
        assert_eq!(isotropy_residual(&[0.5, 0.5]), 0.0);
    }

    #[test]
    fn basis_is_isotropic() {
        let s = set(3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0], &[1.0, 1.0, 1.0]);
        let c = covariance(&s);
        assert!((c - DMatrix::identity(3, 3) / 3.0).norm() < 1e-15);
        assert!(is_eps_isotropic(&s, 1e-12));
    }

    #[test]
    fn heavy_line_found() {
        // e1 carries 0.6 > 1/3
        let s = set(3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0], &[0.3, 0.2, 0.2, 0.3]);
        let w = heavy_subspace_witness(&s, true).unwrap().unwrap();
        assert_eq!(w.dim(), 1);
        assert_eq!(w.members, vec![0, 3]);
        assert!((w.excess() - (0.6 - 1.0 / 3.0)).abs() < 1e-12);
        assert!(!exact_isotropic_feasible(&s).unwrap());
        assert!(matches!(forster_transform(&s, 0.1, 10_000), ForsterOutcome::HeavySubspace(_)));
    }

    #[test]
    fn degenerate_span_is_heavy() {
        let s = set(3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0], &[1.0, 1.0]);
        let w = heavy_subspace_witness(&s, true).unwrap().unwrap();
        assert_eq!(w.dim(), 2);
        assert!((w.mass - 1.0).abs() < 1e-15);
        assert!(!exact_isotropic_feasible(&s).unwrap());
    }

    #[test]
    fn tight_split_is_feasible() {
        let s = set(2, &[1.0, 0.0, 0.0, 1.0], &[1.0, 1.0]);
        assert!(exact_isotropic_feasible(&s).unwrap());
        assert!(heavy_subspace_witness(&s, true).unwrap().is_none());
        assert!(heavy_subspace_witness(&s, false).unwrap().is_some());
    }

    #[test]
    fn brute_force_size_limit() {
        let s = WeightedSet::uniform(DMatrix::from_fn(2, BRUTE_MAX_N + 1, |r, c| (r + c + 1) as f64)).unwrap();
        assert!(matches!(heavy_subspace_witness(&s, true), Err(Error::SizeLimitExceeded { .. })));
    }

    #[test]
    fn dense_descends_into_heavy_line() {
        let s = set(3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0], &[0.3, 0.2, 0.2, 0.3]);
        let ds = dense_isotropic_subspace(&s, 0.1, 10_000).unwrap();
        assert!(!ds.stalled);
        let k = ds.witness.dim();
        assert!(ds.witness.mass >= k as f64 / 3.0 - 1e-12);
        let t = ds.transform.transform_set(&s, &ds.witness.members).unwrap();
        assert!(is_eps_isotropic(&t, 0.1));
    }

    #[test]
    fn transform_maps_queries_consistently() {
        let s = set(2, &[1.0, 0.0, 1.0, 0.1, 0.0, 1.0], &[1.0, 1.0, 1.0]);
        let ForsterOutcome::Success(t) = forster_transform(&s, 0.05, 10_000) else { panic!("expected success") };
        let back = t.query_map();
        for i in 0..s.len() {
            let x = s.point(i);
            assert!((&back * t.local_raw(&x) - x).norm() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn generic_sets_become_isotropic(d in 2usize..5, raw in prop::collection::vec(-1.0..1.0f64, 60)) {
            let n = 3 * d;
            let pts = DMatrix::from_column_slice(d, n, &raw[..d * n]);
            prop_assume!(pts.column_iter().all(|c| c.norm() > 1e-3));
            let s = WeightedSet::uniform(pts).unwrap();
            prop_assume!(exact_isotropic_feasible(&s).unwrap());
            match forster_transform(&s, 0.05, 20_000) {
                ForsterOutcome::Success(t) => {
                    let all: Vec<usize> = (0..n).collect();
                    prop_assert!(is_eps_isotropic(&t.transform_set(&s, &all).unwrap(), 0.05));
                }
                ForsterOutcome::HeavySubspace(w) => prop_assert!(w.mass >= w.dim() as f64 / d as f64 - 1e-9),
                ForsterOutcome::Stalled(_) => {}
            }
        }

        #[test]
        fn dense_subspace_is_heavy_enough(d in 2usize..5, raw in prop::collection::vec(-1.0..1.0f64, 40), rep in 0usize..3) {
            let n = 2 * d + 1;
            let mut pts = DMatrix::from_column_slice(d, n, &raw[..d * n]);
            prop_assume!(pts.column_iter().all(|c| c.norm() > 1e-3));
            for j in 1..=rep {
                let c = pts.column(0).into_owned() * (j as f64 + 1.0);
                pts.set_column(j, &c);
            }
            let s = WeightedSet::uniform(pts).unwrap();
            let ds = dense_isotropic_subspace(&s, 0.1, 20_000).unwrap();
            prop_assert!(ds.witness.mass >= ds.witness.dim() as f64 / d as f64 - 1e-9);
            if !ds.stalled {
                let t = ds.transform.transform_set(&s, &ds.witness.members).unwrap();
                prop_assert!(is_eps_isotropic(&t, 0.1));
            }
        }
    }
}
