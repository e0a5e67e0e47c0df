//! Command-line driver: scenario files in, reproducible JSON or CSV reports
//! out.
//!
//! Exit status 0 means success, 1 a violated inequality and 2 unusable input.

pub mod commands;
pub mod error;
pub mod report;
pub mod scenario;

pub use commands::{run, Cli};
pub use error::{CliError, ExitKind};
