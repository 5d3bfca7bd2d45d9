//! Command-line front end: configuration parsing, cached featurization
//! and the benchmark commands.

pub mod commands;
pub mod config;

pub use commands::exit_code;
pub use config::{RawConfig, RunConfig};
