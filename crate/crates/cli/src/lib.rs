//! Library half of the `apqkd` command-line tool: configuration schema,
//! subcommand bodies and the error type that fixes exit statuses.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{Format, Outcome};
pub use config::ScenarioConfig;
pub use error::CliError;
