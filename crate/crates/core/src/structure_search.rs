//! Multi-scale search for a reference point whose margin is either large or
//! separated by a factor `ell` from the next scale down.

use crate::error::Result;
use crate::geometry_oracle::{check_gap, gaussian_combination, median_abs_margin, SignOracle, WeightedSet};
use crate::seed::Streams;
use nalgebra::DVector;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StructureKind {
    MarginGap,
    LargeMargin,
}

#[derive(Debug, Clone)]
pub struct StructureParams {
    pub ell: f64,
    /// Failure probability.
    pub p: f64,
    pub repetition_c: f64,
}

#[derive(Debug, Clone)]
pub struct StructureResult {
    pub kind: StructureKind,
    pub x_ref: DVector<f64>,
    pub k: f64,
    pub level: usize,
    /// Median representative per level.
    pub levels: Vec<DVector<f64>>,
}

/// Smallest power of two that is at least `10 d`.
pub fn sample_size(d: usize) -> usize {
    (10 * d.max(1)).next_power_of_two()
}

pub fn repetitions(d: usize, p: f64, c: f64) -> usize {
    let m = sample_size(d) as f64;
    (c * (4.0 * m.log2() / p).ln()).ceil().max(1.0) as usize
}

/// Levels `i` with `2^i < 2d`.
pub fn level_count(d: usize) -> usize {
    (0..).take_while(|&i| (1usize << i) < 2 * d.max(1)).count()
}

/// `2^(i+1) / 5` clamped to `[1/10, d]`.
pub fn coverage_k(level: usize, d: usize) -> f64 {
    ((1u64 << (level + 1)) as f64 / 5.0).clamp(0.1, d as f64)
}

pub fn structure_search(
    oracle: &mut dyn SignOracle,
    set: &WeightedSet,
    params: &StructureParams,
    streams: &mut Streams,
) -> Result<StructureResult> {
    let d = set.dim();
    let m = sample_size(d);
    let r = repetitions(d, params.p, params.repetition_c);
    let sampler = set.sampler();
    let mut levels = Vec::new();
    for i in 0..level_count(d) {
        let size = (m >> i).max(1);
        let mut rng = streams.rng("structure_search");
        let reps: Vec<DVector<f64>> = (0..r)
            .map(|_| {
                let idx: Vec<usize> = (0..size).map(|_| sampler.sample(&mut rng)).collect();
                oracle.note_margin_call();
                gaussian_combination(set.points(), &idx, &mut rng)
            })
            .collect();
        let med = median_abs_margin(oracle, &reps)?;
        levels.push(reps[med].clone());
    }
    let mut i = 0;
    while (1usize << i) < d {
        if check_gap(oracle, &levels[i], &levels[i + 1], params.ell)? {
            return Ok(StructureResult {
                kind: StructureKind::MarginGap,
                x_ref: levels[i].clone(),
                k: coverage_k(i, d),
                level: i,
                levels,
            });
        }
        i += 1;
    }
    Ok(StructureResult {
        kind: StructureKind::LargeMargin,
        x_ref: levels[i].clone(),
        k: coverage_k(i, d),
        level: i,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(sample_size(1), 16);
        assert_eq!(sample_size(8), 128);
        assert_eq!(sample_size(13), 256);
        assert_eq!(level_count(1), 1);
        assert_eq!(level_count(8), 4);
        assert_eq!(level_count(9), 5);
    }

    #[test]
    fn k_clamped() {
        assert_eq!(coverage_k(0, 1), 0.4);
        assert_eq!(coverage_k(3, 8), 3.2);
        assert_eq!(coverage_k(6, 8), 8.0);
    }

    #[test]
    fn repetition_count() {
        // ceil(8 ln(4 * 6 * 64))
        assert_eq!(repetitions(4, 1.0 / 64.0, 8.0), 59);
        assert_eq!(repetitions(1, 1e6, 1.0), 1);
    }

    #[test]
    fn large_margin_on_tiny_set() {
        use crate::geometry_oracle::QueryOracle;
        use nalgebra::DMatrix;
        let set = WeightedSet::uniform(DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        let mut o = QueryOracle::new(DVector::from_vec(vec![1.0, 1.0]));
        let sp = StructureParams { ell: 1e9, p: 0.1, repetition_c: 2.0 };
        let r = structure_search(&mut o, &set, &sp, &mut Streams::new(4)).unwrap();
        assert_eq!(r.kind, StructureKind::LargeMargin);
        assert_eq!(r.levels.len(), level_count(2));
        assert_eq!(r.level, 1);
        assert_eq!(r.k, coverage_k(1, 2));
    }
}
