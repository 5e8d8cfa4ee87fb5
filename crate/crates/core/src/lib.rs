//! Quasi-posterior inference with spike-and-slab priors for sparse logistic
//! regression and pseudo-likelihood Ising models, with numerical tools for
//! the associated contraction bounds.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod io;
pub mod ising;
pub mod logistic;
pub mod prior;
pub mod sampler;
pub mod theory;
pub mod types;

pub use error::{Error, Result};
pub use types::{ConeSpec, MatrixParam, Norms, SparseParam, SparsityPattern};
