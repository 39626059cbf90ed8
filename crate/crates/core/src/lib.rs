//! Policy-gradient tools for finite partially observable Markov decision
//! processes.
//!
//! * [`model`]: finite POMDPs, validation and seeded simulation.
//! * [`policy`]: randomized policies with score (`∇μ/μ`) evaluation.
//! * [`analysis`]: exact induced-chain quantities (`π`, `η`, `J_β`, `∇η`,
//!   `∇_β η`, mixing time) used as reference values.
//! * [`gpomdp`]: the single-sample-path estimator of `∇_β η`.
//! * [`optimizer`]: conjugate-gradient ascent and a sign-based line search
//!   that need only gradient estimates.
//! * [`benchmark`]: the three-state test problem.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod benchmark;
pub mod error;
pub mod gpomdp;
pub mod model;
pub mod optimizer;
pub mod policy;
pub mod rng;

pub use analysis::{
    DiscountedValues, Evaluation, GradientKind, GradientVector, InducedChain, MixingReport,
    StationaryDistribution,
};
pub use error::{Error, Result};
pub use gpomdp::GpomdpState;
pub use model::{PomdpModel, Trajectory, ValidationReport};
pub use optimizer::{ConjOutcome, ConjSettings, ConjStatus, GradOracle, OptRunLog};
pub use policy::{FeatureTable, Policy, SoftmaxLinearPolicy, TabularPolicy};
