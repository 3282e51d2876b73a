use thiserror::Error;

/// Failures that abort a run. All of them map to exit status 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Invalid(String),

    #[error("numerical failure: {0}")]
    Numerics(#[from] tfde_core::TfdeError),

    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
}
