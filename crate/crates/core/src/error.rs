use thiserror::Error;

/// Library-wide error type.
///
/// Variants are grouped by how callers should react: `InvalidInput`,
/// `Construction` and `Degenerate` indicate a bad request or an infeasible
/// model description, while `Numerical` and `BelowFloor` indicate that a
/// computation could not reach its accuracy target.
#[derive(Debug, Error)]
pub enum Error {
    /// Arguments violate a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A model or law could not be built from the given parameters.
    #[error("construction failed: {0}")]
    Construction(String),

    /// The requested object exists but is degenerate (zero variance,
    /// degenerate kernel, ...).
    #[error("degenerate: {0}")]
    Degenerate(String),

    /// A numerical routine failed to converge to its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A statistic is indistinguishable from the sampling noise floor.
    #[error("signal below sampling floor; increase s ({0})")]
    BelowFloor(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
