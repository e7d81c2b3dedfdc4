//! Finite-level constructions of Fourier-decaying measures on sets of
//! well-approximable p-adic vectors and matrices.

pub mod analysis;
pub mod arith;
pub mod construction;
pub mod error;
pub mod fourier;
pub mod numeric;
pub mod padic;
pub mod phase_sum;
pub mod stepfn;

pub use error::{Error, Result};
