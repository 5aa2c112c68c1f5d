use thiserror::Error;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or extents that must agree do not.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A value outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller-side precondition was violated.
    #[error("contract error: {0}")]
    Contract(String),

    /// A pattern or field with no mass to normalize.
    #[error("degenerate pattern: {0}")]
    Degenerate(String),

    /// A metric whose denominator is empty.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Parameter vectors that cannot be assembled into a network.
    #[error("assembly error: {0}")]
    Assembly(String),

    /// Architecture or run configuration that cannot be satisfied.
    #[error("configuration error: {0}")]
    Config(String),

    /// Non-finite values met during optimization.
    #[error("numerical failure at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },

    /// Malformed on-disk record.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
