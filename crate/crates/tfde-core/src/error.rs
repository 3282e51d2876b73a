use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TfdeError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what}: requested accuracy not reached (achieved {achieved:.3e})")]
    AccuracyFailure { what: String, achieved: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular matrix: zero pivot at column {0}")]
    SingularMatrix(usize),

    #[error("unsupported size {size} (limit {limit})")]
    UnsupportedSize { size: usize, limit: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("indefinite form: diagonal entry {index} is {value:.3e}")]
    IndefiniteForm { index: usize, value: f64 },

    #[error("invalid contour: {0}")]
    InvalidContour(String),

    #[error("stability bound violated: {observed:.6e} > {bound:.6e}")]
    StabilityViolation { observed: f64, bound: f64 },

    #[error("conditioning failure: {0}")]
    ConditioningFailure(String),

    #[error("shifted solve failed at node {node}: {source}")]
    NodeSolve {
        node: usize,
        #[source]
        source: Box<TfdeError>,
    },
}

pub type Result<T> = std::result::Result<T, TfdeError>;

pub(crate) fn invalid(msg: impl Into<String>) -> TfdeError {
    TfdeError::InvalidParameter(msg.into())
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(TfdeError::DimensionMismatch { expected, got })
    }
}
