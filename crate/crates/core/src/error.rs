use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("too few observations: need at least {needed}, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("design matrix is rank deficient at column {column} ({name})")]
    RankDeficient { column: usize, name: String },

    #[error("AR(1) coefficient {0} is not stationary (|phi| must be < 1)")]
    NonStationary(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("sampler degeneracy: {0}")]
    SamplerDegenerate(String),

    #[error("fit did not converge")]
    NotConverged,

    #[error("{failed} of {total} replicates failed (limit is 5%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("data error: {0}")]
    Data(String),
}

pub(crate) fn ensure_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} is not finite ({v})")))
    }
}
