//! Bayesian neural networks with Student's-t weight distributions, trained
//! without gradients.
//!
//! The forward pass propagates means, variances and scale parameters through
//! scaled linear maps and ReLU activations in closed form; the backward pass
//! applies moment-matched conditional-t posterior updates layer by layer,
//! one sample at a time. Every analytic formula is paired with a Monte Carlo
//! oracle in [`oracle`] so the closed forms can be validated by sampling.
//!
//! Module map:
//! - [`special`]: log-gamma, beta, incomplete beta, Student's-t CDF/PDF
//! - [`tdist`]: Student's-t value types, scale/covariance conversion, sampling,
//!   conditional distributions of partitioned t vectors
//! - [`forward`]: analytic moment propagation (linear map + ReLU)
//! - [`backward`]: conditional-t posterior updates and the per-sample recursion
//! - [`network`]: model assembly, initialization, online training, prediction
//! - [`oracle`]: brute-force sampling oracles for all analytic formulas
//! - [`data`]: CSV ingestion, splits, normalization, OOD transforms, metrics

pub mod backward;
pub mod data;
pub mod error;
pub mod forward;
pub mod network;
pub mod oracle;
pub mod special;
pub mod tdist;

pub use error::{Error, Result};
