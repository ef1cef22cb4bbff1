use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("eigenvalue {0} too close to the branch cut on the positive real axis")]
    BranchCut(num_complex::Complex64),
    #[error("scalar function not defined at eigenvalue {0}: {1}")]
    FunctionDomain(num_complex::Complex64, String),
    #[error("schur decomposition did not converge")]
    SchurFailed,
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid representation: {0}")]
    InvalidRepresentation(String),
    #[error("fourier-transform consistency violation: {0}")]
    FtConsistency(String),
    #[error("resampling exhausted after {0} attempts")]
    ResamplingExhausted(usize),
    #[error("slot error: {0}")]
    Slot(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
