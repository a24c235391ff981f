//! Approximate Bayesian computation for spatial extremes.
//!
//! Five dependence models (extremal-t and Student-t copula with Whittle–Matérn
//! or powered exponential correlation, and Brown–Resnick) are simulated
//! exactly, reduced to dependence summaries and composite-likelihood scores,
//! projected through regression-based summaries and compared by a sequential
//! Monte Carlo ABC sampler with model-switching moves.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod clikelihood;
pub mod error;
pub mod fpstep;
pub mod io;
pub mod margins;
pub mod models;
pub mod numerics;
pub mod pipeline;
pub mod simulate;
pub mod smcabc;
pub mod spatial;
pub mod summaries;

pub use error::{Error, Result};
