use alloc::string::String;

/// Errors reported by the scheduling core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
