//! Domain-decomposition solvers for elliptic problems whose subdomain
//! solvers are either finite-difference oracles or trained operator networks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ddm;
pub mod error;
pub mod geometry;
pub mod gp;
pub mod grid;
pub mod linalg;
pub mod metrics;
pub mod neuralop;
pub mod oracle;
pub mod pipeline;

pub use error::{Error, Result};
