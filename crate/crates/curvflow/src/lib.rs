//! File-driven front end for `curvflow-core`: run configs, CSV/JSON artifacts and
//! the validation suites behind the `curvflow` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod validate;

pub use error::{CliError, CliResult};
