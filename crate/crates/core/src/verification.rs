//! Zero-error layer: checks that every dimension-reduction round of a batch
//! was sound before its labels are committed.
//!
//! A round that factored out a small-margin subspace is sound when each of
//! its accepted points `s` satisfies
//! `|<s, h>| <= bound * ||T s|| * |<a, h>|` for the round's reference `a`.
//! When a later round labeled `s` with certificate `C_s`, that reduces to a
//! comparison between the two references; the comparisons form a matrix
//! problem `<x_i, h> <= C_ij <x_j, h>` over sign-normalized references.
//! Anything else is checked directly with two queries.

use crate::config::{LearnerConfig, VerifyConfig};
use crate::error::{Error, Result};
use crate::geometry_oracle::{compare_abs_margin, Sign, SignOracle, WeightedSet};
use crate::learners::{weak_learn, RoundTranscript};
use crate::seed::Streams;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use std::cmp::Ordering;
use std::collections::HashMap;

/// `<x_i, h> <= c[i][j] <x_j, h>` for every present entry.
#[derive(Debug, Clone)]
pub struct ConstraintMatrix {
    pub refs: Vec<DVector<f64>>,
    pub c: Vec<Vec<Option<f64>>>,
}

impl ConstraintMatrix {
    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn entries(&self) -> usize {
        self.c.iter().flatten().filter(|e| e.is_some()).count()
    }
}

#[derive(Debug, Clone)]
pub struct DirectCheck {
    /// Needs `|<u, h>| <= |<w, h>|`.
    pub u: DVector<f64>,
    pub w: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    pub matrix: ConstraintMatrix,
    /// Transcript index behind each matrix row.
    pub rounds: Vec<usize>,
    pub direct: Vec<DirectCheck>,
    /// Accepted points discharged by a later zero-test label.
    pub trivial: usize,
}

pub fn build_constraints(points: &DMatrix<f64>, rounds: &[RoundTranscript]) -> ConstraintSystem {
    let mut labeled_by: HashMap<usize, (usize, Sign, Option<f64>)> = HashMap::new();
    for (r, t) in rounds.iter().enumerate() {
        for &(i, s, c) in &t.labeled {
            labeled_by.entry(i).or_insert((r, s, c));
        }
    }
    let mut pairs: HashMap<(usize, usize), f64> = HashMap::new();
    let mut direct = Vec::new();
    let mut trivial = 0;
    for (j, t) in rounds.iter().enumerate().filter(|(_, t)| t.needs_check()) {
        for &s in &t.small {
            let x = points.column(s).into_owned();
            let tj = t.transform.local_norm(&x);
            match labeled_by.get(&s) {
                Some(&(_, Sign::Zero, None)) => trivial += 1,
                Some(&(i, _, Some(cv))) if i > j => {
                    let ti = rounds[i].transform.local_norm(&x);
                    let cij = t.small_bound * tj / (2.0 * cv * ti);
                    let e = pairs.entry((i, j)).or_insert(f64::INFINITY);
                    *e = e.min(cij);
                }
                _ => direct.push(DirectCheck { u: x / tj, w: &t.reference * t.small_bound }),
            }
        }
    }
    let mut involved: Vec<usize> = pairs.keys().flat_map(|&(i, j)| [i, j]).collect();
    involved.sort_unstable();
    involved.dedup();
    let row: HashMap<usize, usize> = involved.iter().enumerate().map(|(k, &r)| (r, k)).collect();
    let m = involved.len();
    let mut c = vec![vec![None; m]; m];
    for (&(i, j), &v) in &pairs {
        c[row[&i]][row[&j]] = Some(v);
    }
    let refs = involved.iter().map(|&r| &rounds[r].reference * rounds[r].ref_sign.as_f64()).collect();
    ConstraintSystem { matrix: ConstraintMatrix { refs, c }, rounds: involved, direct, trivial }
}

/// `max(1, floor(m / (c log2(m) beta(m))))` with
/// `beta(m) = 2^sqrt(log2(m) log2(log2(m)))`.
pub fn choose_batch(m: usize, c: f64) -> usize {
    if m <= 2 {
        return 1;
    }
    let l = (m as f64).log2();
    let beta = 2f64.powf((l * l.log2()).sqrt());
    ((m as f64 / (c * l * beta)).floor() as usize).max(1)
}

#[derive(Debug, Clone, Default)]
pub struct MatrixVerdict {
    pub holds: bool,
    /// A violated constraint `(i, j)` when `holds` is false.
    pub failing_pair: Option<(usize, usize)>,
    pub queries: u64,
    /// Queries spent by each recursive point-location call.
    pub sub_queries: Vec<u64>,
    pub merge_queries: u64,
    pub final_queries: u64,
    pub brute_force: bool,
}

/// Checks every constraint with one query each.
pub fn brute_force_verify(oracle: &mut dyn SignOracle, mat: &ConstraintMatrix) -> Result<bool> {
    Ok(first_violation(oracle, mat)?.is_none())
}

/// First constraint, in row-major order, that fails.
pub fn first_violation(oracle: &mut dyn SignOracle, mat: &ConstraintMatrix) -> Result<Option<(usize, usize)>> {
    for i in 0..mat.len() {
        for j in 0..mat.len() {
            if let Some(c) = mat.c[i][j] {
                if oracle.sign(&(&mat.refs[j] * c - &mat.refs[i]))? == Sign::Neg {
                    return Ok(Some((i, j)));
                }
            }
        }
    }
    Ok(None)
}

/// Row-argmin verification with column batches of size `b`. Within a batch
/// the order of `C_ij <x_j, h>` comes from locating the difference set;
/// batch winners are merged by direct comparison.
pub fn matrix_verify(
    oracle: &mut dyn SignOracle,
    mat: &ConstraintMatrix,
    b: usize,
    cfg: &LearnerConfig,
    depth: usize,
    streams: &mut Streams,
) -> Result<MatrixVerdict> {
    let start = oracle.queries();
    let m = mat.len();
    let vc = &cfg.verify;
    if m <= vc.brute_force_max || depth >= vc.depth_cap || b >= m || b == 0 {
        let failing_pair = first_violation(oracle, mat)?;
        return Ok(MatrixVerdict {
            holds: failing_pair.is_none(),
            failing_pair,
            queries: oracle.queries() - start,
            brute_force: true,
            ..Default::default()
        });
    }
    let d = oracle.dim();
    let columns: Vec<Vec<usize>> = (0..m).collect::<Vec<_>>().chunks(b).map(|c| c.to_vec()).collect();
    let mut winners: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut sub_queries = Vec::new();
    for batch in &columns {
        let mut diffs: Vec<DVector<f64>> = Vec::new();
        let mut at: HashMap<(usize, usize, usize), usize> = HashMap::new();
        for (i, row) in mat.c.iter().enumerate() {
            for (a, &j1) in batch.iter().enumerate() {
                for &j2 in &batch[a + 1..] {
                    if let (Some(c1), Some(c2)) = (row[j1], row[j2]) {
                        at.insert((i, j1, j2), diffs.len());
                        diffs.push(&mat.refs[j1] * c1 - &mat.refs[j2] * c2);
                    }
                }
            }
        }
        let before = oracle.queries();
        let signs = if diffs.is_empty() {
            Vec::new()
        } else {
            let mut pts = DMatrix::zeros(d, diffs.len());
            for (k, v) in diffs.iter().enumerate() {
                pts.set_column(k, v);
            }
            locate_at_depth(oracle, &pts, cfg, depth + 1, streams)?.labels
        };
        sub_queries.push(oracle.queries() - before);
        for (i, row) in mat.c.iter().enumerate() {
            let mut best: Option<usize> = None;
            for &j in batch.iter().filter(|&&j| row[j].is_some()) {
                best = Some(match best {
                    None => j,
                    Some(cur) => {
                        let (lo, hi, flip) = if cur < j { (cur, j, false) } else { (j, cur, true) };
                        let s = signs[at[&(i, lo, hi)]];
                        let cur_larger = if flip { s == Sign::Neg } else { s == Sign::Pos };
                        if cur_larger {
                            j
                        } else {
                            cur
                        }
                    }
                });
            }
            winners[i].extend(best);
        }
    }
    let merge_start = oracle.queries();
    let mut argmin = vec![None; m];
    for i in 0..m {
        let mut best: Option<usize> = None;
        for &j in &winners[i] {
            best = Some(match best {
                None => j,
                Some(cur) => {
                    let ci = mat.c[i][cur].unwrap();
                    let cj = mat.c[i][j].unwrap();
                    if oracle.sign(&(&mat.refs[cur] * ci - &mat.refs[j] * cj))? == Sign::Pos {
                        j
                    } else {
                        cur
                    }
                }
            });
        }
        argmin[i] = best;
    }
    let final_start = oracle.queries();
    let mut failing_pair = None;
    for i in 0..m {
        if let Some(j) = argmin[i] {
            let c = mat.c[i][j].unwrap();
            if oracle.sign(&(&mat.refs[j] * c - &mat.refs[i]))? == Sign::Neg {
                failing_pair = Some((i, j));
                break;
            }
        }
    }
    let end = oracle.queries();
    Ok(MatrixVerdict {
        holds: failing_pair.is_none(),
        failing_pair,
        queries: end - start,
        sub_queries,
        merge_queries: final_start - merge_start,
        final_queries: end - final_start,
        brute_force: false,
    })
}

/// Direct checks plus the matrix check for one batch of transcripts.
pub fn verify_rounds(
    oracle: &mut dyn SignOracle,
    points: &DMatrix<f64>,
    rounds: &[RoundTranscript],
    cfg: &LearnerConfig,
    depth: usize,
    streams: &mut Streams,
) -> Result<bool> {
    let sys = build_constraints(points, rounds);
    for chk in &sys.direct {
        if compare_abs_margin(oracle, &chk.u, &chk.w)? == Ordering::Greater {
            return Ok(false);
        }
    }
    if sys.matrix.is_empty() {
        return Ok(true);
    }
    let m = sys.matrix.len();
    let b = choose_batch(m, cfg.verify.batch_c).min(m - 1).max(1);
    Ok(matrix_verify(oracle, &sys.matrix, b, cfg, depth, streams)?.holds)
}

#[derive(Debug, Clone)]
pub struct ZeroErrorOutput {
    pub labels: Vec<Sign>,
    /// Verification outcome of every batch attempt, in order.
    pub attempts: Vec<bool>,
    pub queries: u64,
    pub rounds: usize,
    pub checked_rounds: usize,
}

impl ZeroErrorOutput {
    pub fn committed(&self) -> usize {
        self.attempts.iter().filter(|&&a| a).count()
    }
}

pub fn restart_cap(n: usize, vc: &VerifyConfig) -> usize {
    vc.restart_factor * ((n + 1) as f64).log2().ceil().max(1.0) as usize
}

/// Labels every point with certainty: batches of weak-learner calls whose
/// rounds all verify are committed, the rest are discarded and redone.
pub fn zero_error_locate(
    oracle: &mut dyn SignOracle,
    points: &DMatrix<f64>,
    cfg: &LearnerConfig,
    streams: &mut Streams,
) -> Result<ZeroErrorOutput> {
    locate_at_depth(oracle, points, cfg, 0, streams)
}

fn locate_at_depth(
    oracle: &mut dyn SignOracle,
    points: &DMatrix<f64>,
    cfg: &LearnerConfig,
    depth: usize,
    streams: &mut Streams,
) -> Result<ZeroErrorOutput> {
    let (d, n) = points.shape();
    if oracle.dim() != d {
        return Err(Error::DimensionMismatch { expected: oracle.dim(), got: d });
    }
    let start = oracle.queries();
    let mut labels: Vec<Option<Sign>> =
        points.column_iter().map(|c| if c.norm() == 0.0 { Some(Sign::Zero) } else { None }).collect();
    let mut remaining: Vec<usize> = (0..n).filter(|&i| labels[i].is_none()).collect();
    let per_batch = cfg.verify.batch_weak_learners.unwrap_or(d * d).max(1);
    let cap = restart_cap(n, &cfg.verify);
    let mut attempts = Vec::new();
    let mut rounds_total = 0;
    let mut checked = 0;
    while !remaining.is_empty() {
        if attempts.len() >= cap {
            return Err(Error::GiveUp { attempts: attempts.len() });
        }
        let mut batch: HashMap<usize, Sign> = HashMap::new();
        let mut transcripts = Vec::new();
        let mut todo = remaining.clone();
        for _ in 0..per_batch {
            if todo.is_empty() {
                break;
            }
            let set = WeightedSet::uniform(points.select_columns(&todo))?;
            let out = weak_learn(oracle, &set, cfg, streams)?;
            for (j, &i) in todo.iter().enumerate() {
                if let Some(s) = out.labels[j] {
                    batch.insert(i, s);
                }
            }
            transcripts.extend(out.transcripts.into_iter().map(|t| t.reindex(&todo)));
            todo.retain(|i| !batch.contains_key(i));
        }
        rounds_total += transcripts.len();
        checked += transcripts.iter().filter(|t| t.needs_check()).count();
        let mut ok = verify_rounds(oracle, points, &transcripts, cfg, depth, streams)?;
        if cfg.verify.forced_failure > 0.0 && streams.rng("forced_failure").random::<f64>() < cfg.verify.forced_failure
        {
            ok = false;
        }
        attempts.push(ok);
        if ok {
            for (i, s) in batch {
                labels[i] = Some(s);
            }
            remaining.retain(|&i| labels[i].is_none());
        }
    }
    Ok(ZeroErrorOutput {
        labels: labels.into_iter().map(|l| l.unwrap()).collect(),
        attempts,
        queries: oracle.queries() - start,
        rounds: rounds_total,
        checked_rounds: checked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry_oracle::QueryOracle;
    use crate::isotropy::IsotropicTransform;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn round(
        reference: DVector<f64>,
        small: Vec<usize>,
        bound: f64,
        labeled: Vec<(usize, Sign, Option<f64>)>,
    ) -> RoundTranscript {
        RoundTranscript {
            reference,
            ref_sign: Sign::Pos,
            transform: IsotropicTransform::identity(2),
            small,
            small_bound: bound,
            labeled,
        }
    }

    #[test]
    fn batch_sizes() {
        // m / (c log2 m 2^sqrt(log2 m log2 log2 m)), floored, at least 1
        assert_eq!(choose_batch(2, 1.0), 1);
        assert_eq!(choose_batch(3, 1.0), 1);
        assert_eq!(choose_batch(64, 1.0), 1);
        assert_eq!(choose_batch(5000, 0.5), 7);
        assert_eq!(choose_batch(1_000_000, 1.0), 80);
        assert_eq!(choose_batch(1_000_000, 4.0), 20);
    }

    #[test]
    fn restart_cap_values() {
        let vc = VerifyConfig::default();
        assert_eq!(restart_cap(0, &vc), 20);
        assert_eq!(restart_cap(1000, &vc), 200);
        assert_eq!(restart_cap(1023, &vc), 200);
        assert_eq!(restart_cap(1024, &vc), 220);
    }

    #[test]
    fn constraint_from_later_label() {
        let pts = DMatrix::from_column_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, 0.6, 0.8]);
        let rounds = vec![
            round(v(&[0.0, 1.0]), vec![0, 1, 2], 0.3, vec![]),
            round(v(&[1.0, 1.0]), vec![], 0.0, vec![(0, Sign::Pos, Some(5.0)), (1, Sign::Zero, None)]),
        ];
        let sys = build_constraints(&pts, &rounds);
        assert_eq!(sys.trivial, 1);
        assert_eq!(sys.rounds, vec![0, 1]);
        assert_eq!(sys.matrix.entries(), 1);
        // bound / (2 cert) with unit local norms
        assert!((sys.matrix.c[1][0].unwrap() - 0.03).abs() < 1e-15);
        assert_eq!(sys.direct.len(), 1);
        assert!((&sys.direct[0].u - v(&[0.6, 0.8])).norm() < 1e-15);
        assert!((&sys.direct[0].w - v(&[0.0, 0.3])).norm() < 1e-15);
    }

    #[test]
    fn earlier_label_is_checked_directly() {
        let pts = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let rounds = vec![
            round(v(&[1.0, 1.0]), vec![], 0.0, vec![(0, Sign::Pos, Some(5.0))]),
            round(v(&[0.0, 1.0]), vec![0], 0.3, vec![]),
        ];
        let sys = build_constraints(&pts, &rounds);
        assert!(sys.matrix.is_empty());
        assert_eq!(sys.direct.len(), 1);
    }

    #[test]
    fn brute_force_finds_violation() {
        let mat = ConstraintMatrix {
            refs: vec![v(&[1.0, 0.0]), v(&[2.0, 0.0])],
            c: vec![vec![None, Some(0.4)], vec![Some(1.0), None]],
        };
        let mut o = QueryOracle::new(v(&[1.0, 0.0]));
        // <x0,h> = 1 > 0.4 * 2, so (0, 1) fails
        assert_eq!(first_violation(&mut o, &mat).unwrap(), Some((0, 1)));
        assert_eq!(o.queries(), 1);
        let mat = ConstraintMatrix { c: vec![vec![None, Some(0.5)], vec![Some(2.0), None]], ..mat };
        assert!(brute_force_verify(&mut o, &mat).unwrap());
    }

    #[test]
    fn locate_small_instance_exactly() {
        let d = 3;
        let pts = DMatrix::from_fn(d, 40, |r, c| ((r * 7 + c * 13) % 11) as f64 - 5.0);
        let h = v(&[0.3, -1.0, 0.7]);
        let mut o = QueryOracle::new(h);
        let out = zero_error_locate(&mut o, &pts, &LearnerConfig::default(), &mut Streams::new(11)).unwrap();
        for (i, l) in out.labels.iter().enumerate() {
            assert_eq!(*l, o.truth(&pts.column(i).into_owned()));
        }
        assert_eq!(out.queries, o.queries());
        assert!(out.committed() >= 1);
    }

    #[test]
    fn forced_failures_give_up() {
        let pts = DMatrix::from_fn(2, 10, |r, c| (r + c) as f64 - 4.5);
        let mut cfg = LearnerConfig::default();
        cfg.verify.forced_failure = 1.0;
        cfg.verify.restart_factor = 1;
        let mut o = QueryOracle::new(v(&[1.0, 1.0]));
        let r = zero_error_locate(&mut o, &pts, &cfg, &mut Streams::new(1));
        assert!(matches!(r, Err(Error::GiveUp { attempts: 4 })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn matrix_verify_agrees_with_truth(
            m in 3usize..9,
            raw in prop::collection::vec(0.1..3.0f64, 9),
            cs in prop::collection::vec(0.2..4.0f64, 81),
            present in prop::collection::vec(any::<bool>(), 81),
            seed in any::<u64>(),
        ) {
            let h = v(&[1.0, 0.0]);
            let refs: Vec<_> = (0..m).map(|i| v(&[raw[i], (i as f64).sin()])).collect();
            let c: Vec<Vec<Option<f64>>> = (0..m)
                .map(|i| (0..m).map(|j| (i != j && present[i * 9 + j]).then_some(cs[i * 9 + j])).collect())
                .collect();
            let mut tight = false;
            let mut holds = true;
            for i in 0..m {
                for j in 0..m {
                    if let Some(cij) = c[i][j] {
                        let slack = cij * raw[j] - raw[i];
                        tight |= slack.abs() < 1e-6;
                        holds &= slack >= 0.0;
                    }
                }
            }
            prop_assume!(!tight);
            let mat = ConstraintMatrix { refs, c };
            let mut cfg = LearnerConfig::default();
            cfg.verify.brute_force_max = 2;
            let mut o = QueryOracle::new(h);
            let verdict = matrix_verify(&mut o, &mat, choose_batch(m, 1.0).min(m - 1), &cfg, 0, &mut Streams::new(seed)).unwrap();
            prop_assert_eq!(verdict.holds, holds);
            if let Some((i, j)) = verdict.failing_pair {
                prop_assert!(mat.c[i][j].unwrap() * raw[j] < raw[i]);
            }
        }
    }
}
