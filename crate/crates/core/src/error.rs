use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("correlation matrix is not positive semi-definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemiDefinite { min_eigenvalue: f64 },

    #[error("invalid correlation matrix: {0}")]
    InvalidCorrelation(String),

    #[error("barrier magnitude {magnitude:e} outside [{lower:e}, {upper:e}]")]
    BoundaryOutOfBounds { magnitude: f64, lower: f64, upper: f64 },

    #[error("observation times not strictly increasing at index {index}")]
    UnsortedTimes { index: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("series contains no observations after time 0")]
    EmptySeries,

    #[error("block size must be at least 2, got {0}")]
    BlockSize(usize),

    #[error("all {blocks} blocks are degenerate; nothing to aggregate")]
    AllBlocksDegenerate { blocks: usize },

    #[error("feasible statistic undefined: estimated asymptotic variance is zero")]
    UndefinedStatistic,

    #[error("{failed} of {total} replications failed (more than 5%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("tick file row {row}: {reason}")]
    TickFile { row: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
