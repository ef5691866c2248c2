use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid scene field `{field}`: {reason}")]
    InvalidScene { field: String, reason: String },
    #[error("invalid task field `{field}`: {reason}")]
    InvalidTask { field: String, reason: String },
    #[error("goal `{goal}` is unreachable from the start pose")]
    Unreachable { goal: String },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("value out of range: {0}")]
    OutOfRange(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
