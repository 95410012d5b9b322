//! Subspace-projection eigensolvers for symmetric pencils `Au = λMu`.
//!
//! The crate provides Rayleigh–Ritz projection with computable energy-norm
//! error bounds, the inverse power method on an enriched subspace (block and
//! single-vector forms), geometric and algebraic multigrid coarse spaces, and
//! a verification harness that checks the error estimates numerically.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod linalg;

pub use error::{Error, Result};
pub mod pencil;
pub mod projection;

pub use pencil::{ExactEigenSet, Pencil};
pub mod inverse;
pub mod report;
pub mod multigrid;
pub mod gmg;
pub mod amg;
pub mod io;
pub mod verify;
