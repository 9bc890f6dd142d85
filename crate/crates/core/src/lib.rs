//! Movable-antenna beam coverage for LEO satellites.
//!
//! The crate models one handover interval of a satellite pass, discretizes
//! the coverage and interference areas, and optimizes time-varying antenna
//! positions and constant-modulus weight phases so that leakage outside the
//! coverage area is minimized while every time slot keeps a minimum coverage
//! gain.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod export;
pub mod field;
pub mod grid;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod orbit;
pub mod qcqp;
pub mod scenario;
pub mod surrogate;

pub use config::{Preset, ScenarioConfig};
pub use error::{Error, Result};
pub use metrics::EvaluationReport;
pub use model::{Problem, Trajectory};
pub use optimizer::{IterationLog, OptimizerConfig, RunOutcome, Scheme};
pub use scenario::Scenario;
