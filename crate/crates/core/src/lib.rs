//! Locating finite point sets against a hidden hyperplane using few sign
//! queries: margin oracles, Forster isotropy, the weak/boosted learners and
//! the zero-error verification layer, plus an experiment harness.

pub mod config;
pub mod dim_reduce;
pub mod error;
pub mod geometry_oracle;
pub mod harness;
pub mod iso_learn;
pub mod isotropy;
pub mod learners;
pub mod linalg;
pub mod par;
pub mod seed;
pub mod structure_search;
pub mod verification;

pub use config::LearnerConfig;
pub use error::{Error, Result};
pub use geometry_oracle::{LiftedOracle, QueryOracle, Sign, SignOracle, WeightedSet};
pub use seed::Streams;
