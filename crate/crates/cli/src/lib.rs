//! Command-line front end: configuration, commands, reports and VTK export.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod problem;
pub mod report;
pub mod vtk;

pub use commands::Run;
pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use report::MetricsReport;
