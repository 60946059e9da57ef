use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("lattice mismatch: {0}")]
    LatticeMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A non-finite amplitude appeared while stepping. Carries the step index
    /// so callers can record a blow-up event instead of aborting.
    #[error("non-finite value at step {step} (last finite l2 norm {last_norm:e})")]
    NonFinite { step: usize, last_norm: f64 },

    #[error("no admissible step size: numerator {numerator:e} is not positive")]
    NoAdmissibleStep { numerator: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
