//! Finds a subspace on which every unit vector has small margin, from the
//! span of points whose Gaussian combinations look small next to a
//! reference.

use crate::error::Result;
use crate::geometry_oracle::{compare_abs_margin, gaussian_combination, SignOracle, WeightedSet};
use crate::linalg::sym_eigen_desc;
use crate::seed::Streams;
use nalgebra::{DMatrix, DVector};
use rand::distr::Distribution;
use std::cmp::Ordering;
use std::collections::BTreeSet;

#[derive(Debug, Clone)]
pub struct DimReduceParams {
    /// Accept a sample when `|m(x_S)| <= theta |m(x_ref)|`.
    pub theta: f64,
    pub p: f64,
    pub sample_c: f64,
}

#[derive(Debug, Clone)]
pub struct Reduction {
    /// Orthonormal basis of the small-margin subspace `V`.
    pub v: DMatrix<f64>,
    /// Orthonormal basis of its complement.
    pub v_perp: DMatrix<f64>,
    /// Indices of the accepted points `S'`.
    pub small: Vec<usize>,
    /// `(1/|S'|) sum_x sqrt(sum_i <x, v_i>^2 / lambda_i^2)`; bounds
    /// `sup_{unit v in V} |m(v)| / max_{s in S'} |m(s)|`.
    pub kappa: f64,
    pub eigenvalues: Vec<f64>,
    /// Accepted samples, as index lists.
    pub accepted: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub enum DimReduceOutcome {
    Success(Reduction),
    Failure,
}

pub fn outer_rounds(p: f64) -> usize {
    (1.0 / p).log2().ceil().max(1.0) as usize
}

pub fn samples_per_round(d: usize, k: f64, c: f64) -> usize {
    (c * k * (d as f64).ln()).ceil().max(1.0) as usize
}

pub fn sample_len(d: usize, k: f64) -> usize {
    (3.0 * d as f64 / k).ceil().max(1.0) as usize
}

pub fn dim_reduce(
    oracle: &mut dyn SignOracle,
    set: &WeightedSet,
    x_ref: &DVector<f64>,
    k: f64,
    params: &DimReduceParams,
    streams: &mut Streams,
) -> Result<DimReduceOutcome> {
    let d = set.dim();
    let bar = x_ref * params.theta;
    let size = sample_len(d, k);
    let need = d as f64 - 10.0 * k;
    let sampler = set.sampler();
    for _ in 0..outer_rounds(params.p) {
        let mut rng = streams.rng("dim_reduce");
        let mut small = BTreeSet::new();
        let mut accepted = Vec::new();
        for _ in 0..samples_per_round(d, k, params.sample_c) {
            let idx: Vec<usize> = (0..size).map(|_| sampler.sample(&mut rng)).collect();
            oracle.note_margin_call();
            let xs = gaussian_combination(set.points(), &idx, &mut rng);
            if compare_abs_margin(oracle, &xs, &bar)? != Ordering::Greater {
                small.extend(idx.iter().copied());
                accepted.push(idx);
            }
        }
        if small.is_empty() {
            continue;
        }
        let small: Vec<usize> = small.into_iter().collect();
        let pts = set.points().select_columns(&small);
        let cov = &pts * pts.transpose() / small.len() as f64;
        let (vals, vecs) = sym_eigen_desc(&cov);
        let floor = 1.0 / (4.0 * d as f64);
        let c = vals.iter().take_while(|&&v| v >= floor).count();
        if (c as f64) < need {
            continue;
        }
        let v = vecs.columns(0, c).into_owned();
        let v_perp = vecs.columns(c, d - c).into_owned();
        let kappa = pts
            .column_iter()
            .map(|x| (0..c).map(|i| (x.dot(&v.column(i)) / vals[i]).powi(2)).sum::<f64>().sqrt())
            .sum::<f64>()
            / small.len() as f64;
        return Ok(DimReduceOutcome::Success(Reduction { v, v_perp, small, kappa, eigenvalues: vals, accepted }));
    }
    Ok(DimReduceOutcome::Failure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry_oracle::QueryOracle;

    #[test]
    fn counts() {
        assert_eq!(outer_rounds(0.001), 10);
        assert_eq!(outer_rounds(0.9), 1);
        assert_eq!(samples_per_round(8, 0.4, 8.0), 7);
        assert_eq!(samples_per_round(100, 2.0, 8.0), 74);
        assert_eq!(sample_len(8, 0.4), 60);
        assert_eq!(sample_len(1, 10.0), 1);
    }

    #[test]
    fn finds_small_margin_subspace() {
        // points near e2/e3 have tiny margin against h = e1; e1 is the reference
        let d = 3;
        let n = 40;
        let pts = DMatrix::from_fn(d, n, |r, c| match r {
            0 => 1e-9 * (c as f64 + 1.0),
            1 => ((c * 7) % 5) as f64 - 2.0 + 0.5,
            _ => ((c * 3) % 7) as f64 - 3.0 + 0.25,
        });
        let set = WeightedSet::uniform(pts).unwrap();
        let mut o = QueryOracle::new(DVector::from_vec(vec![1.0, 0.0, 0.0]));
        let x_ref = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let p = DimReduceParams { theta: 1e-3, p: 0.01, sample_c: 8.0 };
        match dim_reduce(&mut o, &set, &x_ref, 0.2, &p, &mut Streams::new(9)).unwrap() {
            DimReduceOutcome::Success(r) => {
                assert_eq!(r.v.ncols() + r.v_perp.ncols(), d);
                assert!(r.v.ncols() >= 1);
                assert!(!r.small.is_empty());
                let gram = r.v.transpose() * &r.v;
                assert!((gram - DMatrix::identity(r.v.ncols(), r.v.ncols())).norm() < 1e-9);
                assert!((r.v.transpose() * &r.v_perp).norm() < 1e-9);
                for c in r.v.column_iter() {
                    assert!(c[0].abs() < 1e-6);
                }
            }
            DimReduceOutcome::Failure => panic!("expected a reduction"),
        }
    }
}
