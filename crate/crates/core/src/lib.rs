//! Gaussian-invariant Metropolis-Hastings samplers with Poisson-equation control variates.
//!
//! The crate is organised around a few pieces:
//!
//! * [`targets`]: target densities (Gaussian, Student-t, mixtures, logistic regression, latent Gaussian models).
//! * [`samplers`]: the Metropolis-Hastings engine with Gaussian-invariant and baseline proposals.
//! * [`latent_gaussian`]: the O(d²) per-iteration GI-MALA specialisation for latent Gaussian models.
//! * [`poisson_cv`]: Poisson-equation solutions and control-variate estimators.
//! * [`diagnostics`]: effective sample size and repeated-run variance ratios.
//! * [`scaling`]: the optimal-scaling objective for near-Gaussian product targets.
//! * [`experiments`]: end-to-end protocols shared by the command-line harness and the test suite.

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod latent_gaussian;
pub mod linalg;
pub mod poisson_cv;
pub mod quadrature;
pub mod rng;
pub mod samplers;
pub mod scaling;
pub mod special;
pub mod targets;

pub use error::{Error, Result};

/// Library version, echoed into every result bundle.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
