use thiserror::Error;

/// Errors raised by the numerical routines and the experiment driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("spacing mismatch: {0} vs {1}")]
    SpacingMismatch(f64, f64),

    #[error("grid overflow: {requested} points exceeds the limit of {limit}")]
    GridOverflow { requested: usize, limit: usize },

    #[error("mesh too fine for grid: delta {delta} < {min_samples} * spacing {spacing}")]
    MeshTooFine {
        delta: f64,
        spacing: f64,
        min_samples: usize,
    },

    #[error("uncertified truncation: window drops {mass:.3e} of mass without an integrable envelope")]
    UncertifiedTruncation { mass: f64 },

    #[error("mass check failed: total mass {mass} deviates from 1 by more than {tol}")]
    MassCheck { mass: f64, tol: f64 },

    #[error("density has mass on the negative half-line")]
    NegativeSupport,

    #[error("quadrature did not converge: estimated error {error:.3e} after {intervals} intervals")]
    Quadrature { error: f64, intervals: usize },

    #[error("boundedness not resolved within k_max = {0}")]
    Unresolved(usize),

    #[error("degenerate constant: {0}")]
    Degenerate(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
