//! Numerical toolkit for backward SDEs whose terminal value may be `+∞`
//! on part of the sample space, posed on the random interval `[0, S]`
//! where `S` is the first exit time of a diffusion from a bounded domain.
//!
//! The minimal non-negative supersolution is approximated from below by
//! solving the same equation with terminal data truncated at increasing
//! levels `k` (the truncation ladder). Each rung is solved by least-squares
//! Monte Carlo on a shared path bundle. Closed-form and quadrature oracles,
//! a finite-difference solver for the associated elliptic problem and a set
//! of statistical diagnostics check the results.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backward;
pub mod bundle_io;
pub mod diagnostics;
pub mod error;
pub mod forward;
pub mod model;
pub mod oracle;
pub mod pde;
pub mod quadrature;
pub mod regression;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
