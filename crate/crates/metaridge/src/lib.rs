//! Generalized ridge regression for meta-learning: estimating the shared
//! hyper-covariance of task coefficients and predicting on new tasks.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod harness;
pub mod model;
pub mod risk;
pub mod spd;

pub use error::{Error, Result};
pub use spd::{SpdMatrix, SymmetricMatrix};
