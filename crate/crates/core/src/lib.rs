//! Chance-constrained knapsack with correlated uniform weights.
//!
//! Items come in `K` groups of `m`. Weights share expectation and variance,
//! and items in the same group share a positive covariance. Feasibility is
//! judged through the one-sided Chebyshev bound on the overflow probability,
//! and solutions are ranked lexicographically by penalized profit and then by
//! the penalized bound.
//!
//! - [`model`]: instances, solutions, moments, surrogate and fitness order
//! - [`algorithms`]: RLS and the (1+1) EA with hitting-time instrumentation
//! - [`analysis`]: level structure, covariance bounds and brute-force oracles
//! - [`harness`]: instance files, experiment batches, CSV, scaling fits, CLI
//!
//! Batches run on rayon when the default `parallel` feature is enabled.

pub mod algorithms;
pub mod analysis;
pub mod error;
pub mod exec;
pub mod harness;
pub mod model;
pub mod rng;

pub use algorithms::{AlgorithmConfig, AlgorithmKind, Init, RunRecord, StopRule};
pub use error::{AlgorithmError, AnalysisError, HarnessError, ModelError};
pub use exec::Execution;
pub use model::{fitness_compare, FitnessValue, ProblemInstance, Solution, WeightModel};
