use thiserror::Error;

/// Errors raised while reading cases, building the network model, or
/// factorizing and solving.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("partition error: {0}")]
    Partition(String),

    #[error("matrix is singular at column {column}")]
    Singular { column: usize },

    #[error("matrix pattern is not covered by the symbolic plan at column {column}")]
    PatternMismatch { column: usize },

    #[error("dc link {link} infeasible: {quantity} = {value}")]
    InfeasibleLink {
        link: usize,
        quantity: &'static str,
        value: f64,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("{0}")]
    Format(String),
}

impl Error {
    /// Short stable tag used on the CLI diagnostic stream.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Structural(_) => "structural",
            Error::Partition(_) => "partition",
            Error::Singular { .. } | Error::PatternMismatch { .. } => "singular",
            Error::InfeasibleLink { .. } => "infeasible",
            Error::Argument(_) => "argument",
            Error::Internal(_) => "internal",
            Error::Format(_) => "format",
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
