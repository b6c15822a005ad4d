use crate::error::{Error, Result};
use crate::geometry_oracle::{lift_instance, LiftedOracle, QueryOracle, Sign, SignOracle};
use crate::linalg::unit;
use crate::seed::Streams;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Planted nonzero margins are at least this large.
pub const MIN_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    UniformSphere,
    ClusteredSubspace,
    MarginGap,
    OnHyperplaneMix,
    LiftedNonhomogeneous,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::UniformSphere,
        Family::ClusteredSubspace,
        Family::MarginGap,
        Family::OnHyperplaneMix,
        Family::LiftedNonhomogeneous,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::UniformSphere => "uniform-sphere",
            Family::ClusteredSubspace => "clustered-subspace",
            Family::MarginGap => "margin-gap",
            Family::OnHyperplaneMix => "on-hyperplane-mix",
            Family::LiftedNonhomogeneous => "lifted-nonhomogeneous",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown family `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    /// Fraction of points inside the planted subspace.
    pub cluster_frac: f64,
    /// Dimension of the planted subspace; `None` means `max(1, d / 4)`.
    pub cluster_dim: Option<usize>,
    /// Fraction of large-margin points in the margin-gap family.
    pub large_frac: f64,
    /// Large margins lie in `[gap_t, 1]`, small ones in
    /// `[gap_t / (10 gap_ratio), gap_t / gap_ratio]`.
    pub gap_t: f64,
    pub gap_ratio: f64,
    pub zero_frac: f64,
    pub max_bias: f64,
}

impl Default for FamilyParams {
    fn default() -> Self {
        Self {
            cluster_frac: 0.6,
            cluster_dim: None,
            large_frac: 0.02,
            gap_t: 0.5,
            gap_ratio: 1e4,
            zero_frac: 0.1,
            max_bias: 0.5,
        }
    }
}

/// On-disk instance: `{d, n, points, weights, hyperplane, bias}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub d: usize,
    pub n: usize,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub hyperplane: Vec<f64>,
    pub bias: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
}

impl Instance {
    pub fn new(points: &DMatrix<f64>, h: &DVector<f64>, bias: f64, family: Option<Family>) -> Self {
        let (d, n) = points.shape();
        Self {
            d,
            n,
            points: points.column_iter().map(|c| c.iter().copied().collect()).collect(),
            weights: vec![1.0 / n as f64; n],
            hyperplane: h.iter().copied().collect(),
            bias,
            family,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() != self.n || self.weights.len() != self.n {
            return Err(Error::InvalidInput("point or weight count differs from n".into()));
        }
        if self.hyperplane.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: self.hyperplane.len() });
        }
        if let Some(p) = self.points.iter().find(|p| p.len() != self.d) {
            return Err(Error::DimensionMismatch { expected: self.d, got: p.len() });
        }
        if self.hyperplane.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidInput("hyperplane normal is zero".into()));
        }
        Ok(())
    }

    pub fn point_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d, self.n, |r, c| self.points[c][r])
    }

    pub fn normal(&self) -> DVector<f64> {
        DVector::from_vec(self.hyperplane.clone())
    }

    pub fn is_homogeneous(&self) -> bool {
        self.bias == 0.0 && self.family != Some(Family::LiftedNonhomogeneous)
    }

    /// The learning problem: working points, oracle and ground truth.
    pub fn problem(&self) -> Result<Problem> {
        self.validate()?;
        let raw = self.point_matrix();
        if self.is_homogeneous() {
            let oracle = QueryOracle::new(self.normal());
            let mut points = raw;
            for mut c in points.column_iter_mut() {
                let n = c.norm();
                if n > 0.0 {
                    c /= n;
                }
            }
            let truth = points.column_iter().map(|c| oracle.truth(&c.into_owned())).collect();
            Ok(Problem { points, oracle: ProblemOracle::Plain(oracle), truth })
        } else {
            let oracle = LiftedOracle::new(self.normal(), self.bias);
            let truth = raw.column_iter().map(|c| oracle.base().truth(&c.into_owned())).collect();
            Ok(Problem { points: lift_instance(&raw), oracle: ProblemOracle::Lifted(oracle), truth })
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let inst: Instance = serde_json::from_str(s).map_err(|e| Error::InvalidInput(e.to_string()))?;
        inst.validate()?;
        Ok(inst)
    }
}

#[derive(Debug, Clone)]
pub enum ProblemOracle {
    Plain(QueryOracle),
    Lifted(LiftedOracle),
}

impl SignOracle for ProblemOracle {
    fn dim(&self) -> usize {
        match self {
            ProblemOracle::Plain(o) => o.dim(),
            ProblemOracle::Lifted(o) => o.dim(),
        }
    }

    fn sign(&mut self, q: &DVector<f64>) -> Result<Sign> {
        match self {
            ProblemOracle::Plain(o) => o.sign(q),
            ProblemOracle::Lifted(o) => o.sign(q),
        }
    }

    fn queries(&self) -> u64 {
        match self {
            ProblemOracle::Plain(o) => o.queries(),
            ProblemOracle::Lifted(o) => o.queries(),
        }
    }

    fn note_margin_call(&mut self) {
        match self {
            ProblemOracle::Plain(o) => o.note_margin_call(),
            ProblemOracle::Lifted(o) => o.note_margin_call(),
        }
    }

    fn margin_calls(&self) -> u64 {
        match self {
            ProblemOracle::Plain(o) => o.margin_calls(),
            ProblemOracle::Lifted(o) => o.margin_calls(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    /// Unit columns the learners run on (lifted for non-homogeneous instances).
    pub points: DMatrix<f64>,
    pub oracle: ProblemOracle,
    pub truth: Vec<Sign>,
}

impl Problem {
    pub fn errors(&self, labels: &[Sign]) -> usize {
        labels.iter().zip(&self.truth).filter(|(a, b)| a != b).count()
    }

    /// Hidden normal in working coordinates. Test and harness use only.
    pub fn hidden(&self) -> DVector<f64> {
        match &self.oracle {
            ProblemOracle::Plain(o) => o.hidden().clone(),
            ProblemOracle::Lifted(o) => o.hidden(),
        }
    }
}

fn gaussian<R: Rng>(rng: &mut R, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

/// Uniform draw from the unit sphere.
pub fn random_unit<R: Rng>(rng: &mut R, d: usize) -> DVector<f64> {
    loop {
        let v = gaussian(rng, d);
        if v.norm() > 1e-6 {
            return unit(v);
        }
    }
}

/// Unit vector orthogonal to the unit vector `h`.
fn orthogonal_unit<R: Rng>(rng: &mut R, h: &DVector<f64>) -> DVector<f64> {
    loop {
        let mut v = gaussian(rng, h.len());
        for _ in 0..2 {
            let c = v.dot(h);
            v.axpy(-c, h, 1.0);
        }
        if v.norm() > 1e-6 {
            return unit(v);
        }
    }
}

/// Draws from `draw` until the margin condition holds.
fn generic_point<R: Rng, F: FnMut(&mut R) -> DVector<f64>>(rng: &mut R, h: &DVector<f64>, mut draw: F) -> DVector<f64> {
    loop {
        let x = draw(rng);
        if x.dot(h).abs() >= MIN_MARGIN {
            return x;
        }
    }
}

/// Unit point with `<x, h> = m` for unit `h` and `|m| <= 1`.
fn point_with_margin<R: Rng>(rng: &mut R, h: &DVector<f64>, m: f64) -> DVector<f64> {
    let u = orthogonal_unit(rng, h);
    h * m + u * (1.0 - m * m).max(0.0).sqrt()
}

pub fn gen_instance(
    family: Family,
    d: usize,
    n: usize,
    params: &FamilyParams,
    streams: &mut Streams,
) -> Result<Instance> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidInput("d and n must be positive".into()));
    }
    if d == 1 && matches!(family, Family::MarginGap | Family::OnHyperplaneMix) {
        return Err(Error::InvalidInput(format!("family `{family}` needs d >= 2")));
    }
    let mut rng = streams.rng("gen_instance");
    let h = random_unit(&mut rng, d);
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut bias = 0.0;
    match family {
        Family::UniformSphere => {
            for _ in 0..n {
                cols.push(generic_point(&mut rng, &h, |r| random_unit(r, d)));
            }
        }
        Family::ClusteredSubspace => {
            let k = params.cluster_dim.unwrap_or((d / 4).max(1)).clamp(1, d);
            let basis = crate::linalg::orthonormal_span(
                &DMatrix::from_fn(d, k, |_, _| rng.sample(StandardNormal)),
                crate::linalg::SPAN_TOL,
            );
            let inside = ((n as f64) * params.cluster_frac).round() as usize;
            for i in 0..n {
                if i < inside {
                    let b = basis.clone();
                    cols.push(generic_point(&mut rng, &h, |r| unit(&b * gaussian(r, b.ncols()))));
                } else {
                    cols.push(generic_point(&mut rng, &h, |r| random_unit(r, d)));
                }
            }
        }
        Family::MarginGap => {
            let large = ((n as f64) * params.large_frac).ceil() as usize;
            let hi = params.gap_t / params.gap_ratio;
            for i in 0..n {
                let m = if i < large {
                    rng.random_range(params.gap_t..=1.0)
                } else {
                    rng.random_range(hi / 10.0..=hi).max(MIN_MARGIN)
                };
                let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                cols.push(point_with_margin(&mut rng, &h, s * m));
            }
        }
        Family::OnHyperplaneMix => {
            let zeros = ((n as f64) * params.zero_frac).floor() as usize;
            for i in 0..n {
                if i < zeros {
                    cols.push(orthogonal_unit(&mut rng, &h));
                } else {
                    cols.push(generic_point(&mut rng, &h, |r| random_unit(r, d)));
                }
            }
        }
        Family::LiftedNonhomogeneous => {
            bias = rng.random_range(-params.max_bias..=params.max_bias);
            for _ in 0..n {
                loop {
                    let x = gaussian(&mut rng, d);
                    if (x.dot(&h) + bias).abs() >= MIN_MARGIN {
                        cols.push(x);
                        break;
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let points = DMatrix::from_fn(d, n, |r, c| cols[order[c]][r]);
    Ok(Instance::new(&points, &h, bias, Some(family)))
}
