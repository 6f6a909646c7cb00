use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-convex polygon")]
    NonConvex,
    #[error("degenerate quadrangle")]
    Degenerate,
    #[error("not a tensor file")]
    NotATensor,
    #[error("unsupported tensor version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported tensor dtype {0}")]
    UnsupportedDtype(u32),
    #[error("payload size mismatch: header describes {expected} bytes, found {actual}")]
    PayloadSize { expected: usize, actual: usize },
    #[error("shape mismatch: expected {expected:?}, found {actual:?}")]
    Shape { expected: Vec<usize>, actual: Vec<usize> },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("detection file: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
