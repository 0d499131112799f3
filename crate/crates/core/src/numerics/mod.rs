//! Sparse and dense linear algebra used throughout the crate.

mod cg;
mod chol;
mod dense;
mod eig;
mod pod;
mod sparse;

pub use cg::{cg_solve, cg_solve_into};
pub use chol::EnvelopeCholesky;
pub use dense::{gram, orthonormality_defect, orthonormalize_against, solve_regularized_interpolation};
pub use eig::max_gen_eig;
pub use pod::{deflate, hapod, pod, projection_error, PodResult};
pub use sparse::{Pattern, SparseMatrix};
