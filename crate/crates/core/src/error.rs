use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input text (CSV header, numeric field, JSON document).
    #[error("parse error: {0}")]
    Parse(String),

    /// Input that parsed but violates a precondition or invariant.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A numerical routine failed to produce a usable result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Error raised inside a pipeline stage, tagged with the stage name and,
    /// where it applies, the instance being processed.
    #[error("stage `{stage}`{}: {source}", instance.as_ref().map(|i| format!(" (instance {i})")).unwrap_or_default())]
    Stage {
        stage: String,
        instance: Option<String>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &str, instance: Option<&str>) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            instance: instance.map(str::to_string),
            source: Box::new(self),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(format!("json: {e}"))
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(format!("csv: {e}"))
    }
}
