//! Error type shared by every module of the crate.

use thiserror::Error;

/// Broad classification of an [`Error`], used by front ends to pick an exit
/// status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// An input parameter violates a type invariant.
    Validation,
    /// Inputs are individually valid but the model cannot be evaluated there.
    ModelDomain,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("{quantity} is zero; the ratio defining it is undefined")]
    Degenerate { quantity: &'static str },

    #[error("{quantity} = {value} exceeds 1; afterpulse probability too large for the single-order afterpulse model")]
    GainExceedsUnity { quantity: &'static str, value: f64 },

    #[error("weak decoy intensity {nu1} is not sufficiently below signal intensity {mu}")]
    DecoySpacing { mu: f64, nu1: f64 },

    #[error("single-photon yield lower bound {y1_lower} is not positive; link too noisy for a positive key")]
    EstimationInfeasible { y1_lower: f64 },

    #[error("optimal-intensity condition has no solution: right-hand side {rhs} >= 1 (error rate too high)")]
    NoSolution { rhs: f64 },

    #[error("{what} is outside its domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("root is not bracketed by [{lower}, {upper}]")]
    NotBracketed { lower: f64, upper: f64 },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { field: field.into(), reason: reason.into() }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter { .. } | Error::NotBracketed { .. } => ErrorKind::Validation,
            _ => ErrorKind::ModelDomain,
        }
    }

    /// Stable kebab-case identifier, written into sweep output as a reason code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid-parameter",
            Error::Degenerate { .. } => "degenerate-input",
            Error::GainExceedsUnity { .. } => "gain-exceeds-unity",
            Error::DecoySpacing { .. } => "decoy-spacing",
            Error::EstimationInfeasible { .. } => "estimation-infeasible",
            Error::NoSolution { .. } => "no-solution",
            Error::Domain { .. } => "domain",
            Error::NotBracketed { .. } => "not-bracketed",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
