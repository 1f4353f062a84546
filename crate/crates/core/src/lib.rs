//! Numerical laboratory for optimal stopping.
//!
//! The crate computes values in optimal stopping and minimal optimal stopping
//! times on recombining binomial trees, checks them against exhaustive
//! enumeration of adapted rules, and measures how discretized and
//! Cox-Ross-Rubinstein models approach their continuous limits when the
//! random walks are coupled pathwise to a Brownian motion.
//!
//! Modules:
//! - [`paths`]: càdlàg step paths, uniform and Skorokhod J1 distances, discretization.
//! - [`processes`]: Brownian drivers, Black-Scholes paths, band-exit embedding of random walks.
//! - [`trees`]: binomial models, payoffs, Snell envelopes, exercise boundaries.
//! - [`stopping`]: stopping rules, exact rule values, exhaustive and randomized oracles.
//! - [`diagnostics`]: tightness, filtration and stopping-time-law estimators.

// `!(x > 0.0)` also rejects NaN, which is the intent wherever it is used.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod paths;
pub mod processes;
pub mod stopping;
pub mod trees;

mod numeric;

pub use error::{Result, StopLabError};
