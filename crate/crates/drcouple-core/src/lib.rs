//! Doubly robust Bayesian average-treatment-effect estimation via posterior
//! coupling.
//!
//! The pipeline keeps the outcome-regression posterior and the propensity-score
//! posterior strictly independent, then couples the two by exponentially
//! tilting their product so that the doubly robust moment (the "clever
//! covariate" residual average) is zero in posterior mean. The tilted draws
//! feed a G-formula contrast, yielding an explicit posterior for the ATE that
//! is consistent when either nuisance model is correctly specified.
//!
//! The crate is `no_std` (with `alloc`): all file formats, parallelism and the
//! command-line front end live in the companion `drcouple-cli` crate.
//!
//! Module map:
//! - [`data`]: observed-data container, validation, covariate transforms
//! - [`model`]: model specifications, design matrices, predictions
//! - [`glm`]: weighted maximum-likelihood fits (IRLS / least squares)
//! - [`sampler`]: posterior draws (conjugate, Metropolis, horseshoe Gibbs)
//! - [`moment`]: doubly robust moment functions used as tilting constraints
//! - [`tilt`]: tilting-parameter solvers (importance sampling and SMC)
//! - [`estimator`]: ATE posteriors, summaries, and baseline estimators
//! - [`sensitivity`]: unmeasured-confounding reweighting
//! - [`selection`]: high-dimensional confounder selection with re-tilt
//! - [`simulate`]: benchmark generator, replication runner, metrics

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod estimator;
pub mod glm;
pub mod linalg;
pub mod model;
pub mod moment;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod selection;
pub mod sensitivity;
pub mod simulate;
pub mod tilt;

pub use error::{Error, Result};
