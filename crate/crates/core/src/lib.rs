//! Interactive pool-based active learning for binary change detection.
//!
//! Each labeling batch (a *display*) is chosen by minimizing a convex
//! objective over membership degrees of the unlabeled pool that mixes
//! representativity, diversity, ambiguity and cardinality terms. A stateless
//! Q-learning bandit picks which of the criteria to switch on at every
//! iteration.

pub mod bandit;
pub mod benchmark;
pub mod classifier;
pub mod clustering;
pub mod data_pool;
pub mod error;
pub mod membership;
pub mod metrics;
pub mod rng;
pub mod session;
pub mod strategies;

pub use error::{Error, Result};
