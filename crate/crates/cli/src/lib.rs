//! Command-line experiment harness: config parsing, target and sampler construction, and
//! result bundles.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;
pub mod problem;

pub use bundle::ResultBundle;
pub use config::ExperimentConfig;
pub use error::CliError;
