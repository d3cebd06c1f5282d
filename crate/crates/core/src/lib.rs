//! Empirical sensitivity of statistical estimators under sample contamination.

pub mod adversaries;
pub mod analysis;
pub mod bernoulli;
pub mod data;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod rng;

pub use data::{compute_k, hamming_distance, sample_gaussian, CorruptionBudget, Dataset, GaussianModel};
pub use error::{Result, SensError};
pub use estimators::{Estimator, SharedEstimator};
pub use harness::{estimate_es, AdversarySpec, Model, SensitivityReport};
pub use rng::RngStream;
