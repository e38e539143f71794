use thiserror::Error;

/// Errors raised anywhere in the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value {value} does not fit fixed-point format {format}")]
    Overflow { value: f64, format: String },

    #[error("rotation bound violated: |{value}| > scale {scale}")]
    RotationBound { value: f64, scale: f64 },

    #[error("simulator cap exceeded: {required} qubits required, cap is {cap}")]
    CapExceeded { required: usize, cap: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("effective condition number {measured:.4e} exceeds declared kappa {declared:.4e}")]
    Condition { measured: f64, declared: f64 },

    #[error("aliasing risk: |H~|*t = {product:.4} >= pi; use t <= {suggested:.6}")]
    Aliasing { product: f64, suggested: f64 },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
