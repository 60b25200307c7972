//! Low-rank matrix sensing: trace-regression simulation, the matrix LASSO
//! solved by ADMM, empirical RIP/RSC probes, error-bound checks, Grassmann
//! packings for minimax instances, and a seeded experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod harness;
pub mod matcore;
pub mod minimax;
pub mod rng;
pub mod sensing;
pub mod solvers;
pub mod theory;

pub use error::{Error, Result};
pub use matcore::DenseMatrix;
