//! Error types shared across the laboratory.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A lookup target is outside the achievable range (e.g. inversion).
    #[error("range error: {0}")]
    Range(String),

    /// A requested combination of kernel, case and parameters is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Adaptive integration did not reach the requested tolerance.
    /// Carries the partial estimate so callers can report it.
    #[error("convergence error: {message} (partial estimate {partial})")]
    Convergence { message: String, partial: f64 },

    /// An integral diverges for the supplied data.
    #[error("divergence error: {0}")]
    Divergence(String),

    /// Supplied data violates its contract (e.g. survival outside [0,1]).
    #[error("data error: {0}")]
    Data(String),

    /// A geometric construction is impossible for the given shape.
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// Config or report (de)serialization failure; message names the key.
    #[error("schema error: {0}")]
    Schema(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
