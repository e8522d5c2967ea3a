//! Numerical optimization of real-time system parameters under black-box
//! schedulability constraints.
//!
//! [`north`] alternates a feasibility-guarded Levenberg–Marquardt descent
//! with variable elimination. [`northplus`] adds priority-assignment moves
//! guided by a barrier-transformed response-time problem. Schedulability is
//! only ever queried through [`oracle::SchedulabilityOracle`].

// Validation uses `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod harness;
pub mod north;
pub mod northplus;
pub mod numcore;
pub mod objectives;
pub mod oracle;
pub mod problem;
pub mod taskmodel;

pub use error::{Error, Result};
