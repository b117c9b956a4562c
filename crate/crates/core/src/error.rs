use thiserror::Error;

/// Failure categories shared across the workspace. The CLI maps these onto
/// process exit codes, so the split between config, data, and numeric
/// problems is part of the public contract.
#[derive(Clone, Debug, Error)]
pub enum Error {
    /// A parameter lies outside the region where the requested quantity is
    /// defined (natural parameter off the family domain, index out of range).
    #[error("domain error: {0}")]
    Domain(String),

    /// A computation produced a non-finite value or an iterative solver
    /// failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Inconsistent or invalid configuration supplied by the caller.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or insufficient input data.
    #[error("data error: {0}")]
    Data(String),

    /// A calibration target could not be met inside the search bracket.
    #[error("calibration error: {0}")]
    Calibration(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
    pub fn calibration(msg: impl Into<String>) -> Self {
        Error::Calibration(msg.into())
    }

    /// Process exit code used by the CLI for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Calibration(_) => 2,
            Error::Data(_) => 3,
            Error::Domain(_) | Error::Numeric(_) => 4,
        }
    }
}
