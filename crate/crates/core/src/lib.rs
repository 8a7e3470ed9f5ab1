//! Sparse covariance neural networks.
//!
//! Covariance estimation and sparsification (hard/soft thresholding and
//! stochastic edge dropping), polynomial covariance filters, coVariance
//! Neural Networks (VNNs) with hand-derived gradients, and tools that measure
//! stability empirically and evaluate the matching closed-form bounds.

pub mod cli;
pub mod covariance;
pub mod data;
pub mod error;
pub mod filter;
pub mod linalg;
pub mod model;
pub mod stability;

pub use error::{Error, Result};
