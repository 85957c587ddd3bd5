//! Risk estimation for pool-based active learning.
//!
//! Points acquired by an active learner are not a uniform sample of the pool,
//! so the plain mean of their losses is a biased estimate of the pool risk.
//! This crate provides importance-weighted estimators that remove that bias
//! (`PURE` and the lower-variance `LURE`), the acquisition proposals they are
//! paired with, an exact enumeration oracle for tiny pools, and a seeded Monte
//! Carlo harness for experiments on a synthetic regression problem.

pub mod error;
pub mod estimators;
pub mod harness;
pub mod models;
pub mod oracle;
pub mod pool;
pub mod proposals;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use estimators::{
    estimate, lure_constants, lure_estimate, lure_weights, naive_estimate, partial_support_bias, pure_estimate,
    pure_terms, pure_weights, EstimatorKind, LureConstants, WeightedRisk,
};
pub use models::{
    fit_weighted_least_squares, overfitting_bias, population_risk_proxy, squared_error_loss, FeatureMap, LinearModel,
    WeightedSampleSet,
};
pub use oracle::{
    enumerate_moments, enumerate_variance_decomposition, enumerate_weight_expectations, Enumeration, ExactMoments,
    OracleOptions, VarianceDecomposition,
};
pub use pool::{
    pool_empirical_risk, sample_trajectory, sample_trajectory_with_rng, validate_trajectory, LabeledPool, Trajectory,
    TrajectoryStep, Violation,
};
pub use proposals::{Proposal, ProposalKind, ProposalRule, ProposalSpec, ScoreSource, Scorer};
pub use synth::{build_pool, sample_population, target_fn, PopulationSpec};
