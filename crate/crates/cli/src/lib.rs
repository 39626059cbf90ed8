//! Command-line experiments for the GPOMDP estimator and the conjugate
//! gradient optimizer.
//!
//! Three experiments are available: `grad-error` (estimation error against
//! sample-path length), `bias-sweep` (long-run error against β) and `train`
//! (conjugate-gradient training from random starts). Each is driven by a TOML
//! config and writes one CSV plus a plain-text summary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod records;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{CliError, Result};
pub use experiment::{ExperimentOutput, RunOptions, run};
pub use records::{HEADER, RunRecord, emit_csv, read_csv};
