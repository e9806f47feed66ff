//! Numerical laboratory for partially hyperbolic flows.
//!
//! The crate estimates, along orbits of concrete vector fields, the
//! quantities that decide whether an attracting set carries physical (SRB)
//! measures: the centre-unstable bundle and the Linear Poincaré Flow
//! restricted to it, non-uniform sectional expansion, slow recurrence to
//! equilibria, Pliss hyperbolic times, and empirical physical measures.
//!
//! Modules:
//! - [`flow`]: vector fields, RK4 flow and tangent integration, truncated
//!   distance, built-in systems.
//! - [`lpf`]: projections, splitting estimates, the Linear Poincaré Flow
//!   and cocycle traces.
//! - [`pliss`]: Pliss times for sequences and sampled functions, hyperbolic
//!   times with recurrence control.
//! - [`criteria`]: ensemble verdicts and structural identities.
//! - [`srb`]: Birkhoff averages, empirical measures, pushforwards at
//!   hyperbolic times, clustering and basin coverage.
//! - [`cli`]: the batch front-end behind the `srblab` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod criteria;
pub mod error;
pub mod flow;
pub mod io;
pub mod linalg;
pub mod lpf;
pub mod pliss;
pub mod srb;

pub use error::{Error, Result};
