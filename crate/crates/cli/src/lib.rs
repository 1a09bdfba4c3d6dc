//! Config-driven experiment runner for the `dbn-ids` toolkit.
//!
//! The binary is a thin clap front end over [`commands`]; tests call the
//! same functions directly.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;

pub use bundle::ModelBundle;
pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
