//! Optimal approximate and exact designs for treatment comparisons in the
//! presence of covariates.

// `!(x > 0.0)` is used on purpose to reject NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod criteria;
pub mod error;
pub mod linalg;
pub mod lp;
pub mod marginal_opt;
pub mod model;
pub mod par;
pub mod rounding;
pub mod sparsify;

pub use error::{DesignError, Result};
