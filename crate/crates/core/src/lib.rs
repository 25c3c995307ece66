//! Federated gradient-boosted trees, a dataset-reconstruction attack against
//! their shared statistics, a differential-privacy defense, and the metrics
//! used to score reconstructions.

pub mod assign_opt;
pub mod attack;
pub mod cli;
pub mod defense;
pub mod error;
pub mod eval;
pub mod federation;
pub mod gbdt;
pub mod rng;
pub mod tabular;

pub use error::{Error, Result};
