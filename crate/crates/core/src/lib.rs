//! Composable fairness interventions around binary classifiers.

// negated comparisons deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod composer;
pub mod data;
pub mod error;
pub mod explain;
pub mod matrix;
pub mod metrics;
pub mod mitigation;
pub mod models;
pub mod thresholding;

pub use error::{Error, Result};
pub use matrix::Matrix;
