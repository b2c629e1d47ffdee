//! Sensor (PMU) placement for nonlinear multimachine power systems.
//!
//! Placements maximize the log-determinant of the empirical observability
//! Gramian and are validated with a square-root unscented Kalman filter.

// `!(x > 0.0)` is how NaN gets rejected along with the rest.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod gramian;
pub mod network;
pub mod placement;
pub mod robustness;

pub use error::{Error, ErrorKind, Result};

#[cfg(test)]
mod testutil;
