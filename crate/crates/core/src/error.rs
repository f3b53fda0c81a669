use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the toolkit.
///
/// Variants fall into two families that the CLI maps to distinct exit codes:
/// validation errors (bad arguments or broken preconditions) and data errors
/// (unreadable, missing or inconsistent inputs).
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("alignment infeasible: {frames} frames available, at least {required} required")]
    Infeasible { frames: usize, required: usize },

    #[error("symbol `{0}` is not in the emission vocabulary")]
    UnknownSymbol(String),

    #[error("inconsistent input: {0}")]
    Consistency(String),

    #[error("split infeasible: {0}")]
    SplitInfeasible(String),

    #[error("numeric failure in {location}: {detail}")]
    Numeric { location: String, detail: String },

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("insufficient seeds: {0} report(s), at least 2 required")]
    InsufficientSeeds(usize),

    #[error("data error: {0}")]
    Data(String),

    #[error("malformed FMAT container: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// True when the failure comes from the inputs themselves rather than
    /// from how the operation was invoked.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Data(_)
                | Error::Format(_)
                | Error::Io { .. }
                | Error::Json { .. }
                | Error::Consistency(_)
                | Error::UnknownSymbol(_)
                | Error::Numeric { .. }
        )
    }
}
