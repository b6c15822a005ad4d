use serde::{Deserialize, Serialize};

/// Every tunable constant of the learners in one place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Representativeness factor of the Gaussian margin oracle.
    pub lambda: f64,
    /// Use the worst-case constants (`lambda`, gap factor) instead of the
    /// practical ones.
    pub theory_constants: bool,
    /// Multiplier in the structure-search repetition count.
    pub repetition_c: f64,
    /// Multiplier in the dimension-reduction sample count.
    pub dim_reduce_c: f64,
    /// Failure probability of a weak-learner call is `d^-failure_exponent`.
    pub failure_exponent: f64,
    /// Weak-learner budget is `5 * weak_budget_c * d * log2(d)^2` queries.
    pub weak_budget_c: f64,
    /// Boosting runs `ceil(boost_rounds_c * ln(n / delta))` rounds.
    pub boost_rounds_c: f64,
    /// Active learner draws `ceil(active_samples_c * (d + ln(2 / delta)) / eps)` samples.
    pub active_samples_c: f64,
    /// Per-call query cap of the isotropic learner, in units of
    /// `d * log2(d) * log2(d lambda / p)`.
    pub iso_cap_c: f64,
    pub forster: ForsterConfig,
    pub verify: VerifyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForsterConfig {
    pub eps: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    /// Constraint matrices with at most this many rows are checked entry by entry.
    pub brute_force_max: usize,
    pub depth_cap: usize,
    pub batch_c: f64,
    pub restart_factor: usize,
    /// Probability with which a batch is declared unverified regardless of
    /// the outcome. Testing knob, zero in normal use.
    pub forced_failure: f64,
    /// Weak-learner calls per batch; `None` means `d^2`.
    pub batch_weak_learners: Option<usize>,
}

/// Frozen weak-learner budget constant, from `harness::calibrate_budget_c`.
pub const CALIBRATED_BUDGET_C: f64 = 324.0;

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            lambda: 20.0,
            theory_constants: false,
            repetition_c: 8.0,
            dim_reduce_c: 8.0,
            failure_exponent: 3.0,
            weak_budget_c: CALIBRATED_BUDGET_C,
            boost_rounds_c: 40.0,
            active_samples_c: 8.0,
            iso_cap_c: 64.0,
            forster: ForsterConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

impl Default for ForsterConfig {
    fn default() -> Self {
        Self { eps: 0.25, max_iter: 10_000 }
    }
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            brute_force_max: 64,
            depth_cap: 3,
            batch_c: 4.0,
            restart_factor: 20,
            forced_failure: 0.0,
            batch_weak_learners: None,
        }
    }
}

pub fn log2_floor1(d: usize) -> f64 {
    (d as f64).log2().max(1.0)
}

impl LearnerConfig {
    pub fn theory() -> Self {
        Self { theory_constants: true, ..Self::default() }
    }

    /// Failure probability for a learner call in ambient dimension `d`.
    pub fn failure_prob(&self, d: usize) -> f64 {
        (d.max(2) as f64).powf(-self.failure_exponent)
    }

    pub fn lambda_for(&self, d: usize) -> f64 {
        if self.theory_constants {
            (10.0 * (d.max(2) as f64).powi(2) / self.failure_prob(d)).max(20.0)
        } else {
            self.lambda.max(20.0)
        }
    }

    /// Gap factor used by structure search.
    pub fn ell_gap(&self, d: usize, lambda: f64) -> f64 {
        if self.theory_constants {
            ell_sound(d, lambda)
        } else {
            (4.0 * d as f64).max(100.0)
        }
    }

    /// Acceptance ratio `lambda^2 / ell` used by dimension reduction.
    pub fn dim_reduce_theta(&self, d: usize, lambda: f64) -> f64 {
        lambda * lambda / ell_sound(d, lambda)
    }

    pub fn weak_budget(&self, d: usize) -> u64 {
        let l = log2_floor1(d);
        (5.0 * self.weak_budget_c * d as f64 * l * l).ceil() as u64
    }
}

/// Gap factor under which dimension reduction is provably sound:
/// `48 sqrt(10) lambda^4 d^(5/2)`.
pub fn ell_sound(d: usize, lambda: f64) -> f64 {
    48.0 * 10f64.sqrt() * lambda.powi(4) * (d as f64).powf(2.5)
}
