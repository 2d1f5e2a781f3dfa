use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised across the crate. The variant names the stage that failed.
#[derive(Debug, Error)]
pub enum Error {
    #[error("data: {0}")]
    Data(String),

    #[error("forest: {0}")]
    Forest(String),

    #[error("shap: {0}")]
    Shap(String),

    #[error("sampling: {0}")]
    Sampling(String),

    #[error("decomposition: {0}")]
    Decompose(String),

    #[error("evidence: {0}")]
    Evidence(String),

    #[error("uncertainty: {0}")]
    Uncertainty(String),

    #[error("aggregation: {0}")]
    Aggregate(String),

    #[error("format: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
