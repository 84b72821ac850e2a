use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("tape error: {0}")]
    Tape(String),
    #[error("invalid config at `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("non-finite value detected: {0}")]
    Numeric(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config { field: field.into(), reason: reason.into() }
    }

    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Data(_) | Error::Format(_) | Error::Io(_) => 3,
            Error::Config { .. } | Error::Json(_) => 4,
            Error::Numeric(_) => 5,
            Error::Shape(_) | Error::Index(_) | Error::Tape(_) => 4,
        }
    }

    /// Stable machine-parsable prefix printed ahead of the message.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Usage(_) => "E_USAGE",
            Error::Data(_) | Error::Io(_) => "E_DATA",
            Error::Format(_) => "E_FORMAT",
            Error::Config { .. } | Error::Json(_) => "E_CONFIG",
            Error::Numeric(_) => "E_NUMERIC",
            Error::Shape(_) | Error::Index(_) | Error::Tape(_) => "E_SHAPE",
        }
    }
}
