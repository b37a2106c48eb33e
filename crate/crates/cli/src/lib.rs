#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Experiment driver: configuration, sweeps with checkpoints, CSV/JSON/SVG reports.

pub mod config;
pub mod error;
pub mod report;
pub mod run;
pub mod svg;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
