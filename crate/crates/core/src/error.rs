use std::path::PathBuf;

/// Errors produced by the anomaly-detection toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Format {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("lookup error: {0}")]
    Lookup(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("cover radius undefined: query set contains no {missing} sample")]
    CoverageUndefined { missing: &'static str },
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("degenerate density: {0}")]
    DegenerateDensity(String),
    #[error("degenerate centers: {0}")]
    DegenerateCenters(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input rather than a failure while running.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::Format { .. }
                | Error::Validation(_)
                | Error::Argument(_)
                | Error::Capacity(_)
                | Error::Lookup(_)
                | Error::CoverageUndefined { .. }
                | Error::Serde(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
