use std::fmt;
use std::io;

use afterpulse_qkd::{Error, ErrorKind};

/// Failure of a subcommand, mapped onto the process exit status.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable syntax or a parameter that violates a model invariant.
    /// `path` is `section.field` where one can be named.
    Config {
        path: String,
        message: String,
    },
    /// Valid inputs the model cannot be evaluated at.
    Model(Error),
    Io {
        path: String,
        source: io::Error,
    },
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { path: path.into(), message: message.into() }
    }

    /// Classify a core error raised while handling `section`.
    pub fn from_core(section: &str, err: Error) -> Self {
        match (err.kind(), &err) {
            (ErrorKind::Validation, Error::InvalidParameter { field, reason }) => {
                let path = if section.is_empty() { field.clone() } else { format!("{section}.{field}") };
                CliError::Config { path, message: reason.clone() }
            }
            (ErrorKind::Validation, _) => CliError::config("solver", err.to_string()),
            (ErrorKind::ModelDomain, _) => CliError::Model(err),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Model(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config { path, message } => write!(f, "error[config]: {path}: {}", one_line(message)),
            CliError::Model(e) => write!(f, "error[model]: {}: {}", e.code(), one_line(&e.to_string())),
            CliError::Io { path, source } => write!(f, "error[io]: {path}: {}", one_line(&source.to_string())),
        }
    }
}

impl std::error::Error for CliError {}
