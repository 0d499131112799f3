//! Multi-fidelity trust-region optimization of parametrized heat problems:
//! finite elements, reduced bases with certified bounds, kernel surrogates.

// Index loops mirror the math in the assembly and sparse kernels; `!(a <= b)`
// deliberately treats NaN as a failed comparison.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fem;
pub mod estimators;
pub mod fom;
pub mod harness;
pub mod ml_kernel;
pub mod rb;
pub mod tr_opt;
pub mod numerics;

pub use error::{Error, Result};
