//! Pauli-measurement quantum state tomography at desk scale: a simulator
//! for the K-shot Binomial observation model over the tensor-product Pauli
//! basis, low-rank density-matrix estimators driven by an operator-norm
//! residual constraint, and a sweep harness that fits empirical
//! convergence-rate exponents.

pub mod checks;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod linalg;
pub mod measure;
pub mod pauli;
pub mod states;

pub use error::{Error, Result};
