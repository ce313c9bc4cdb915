use thiserror::Error;

pub type Result<T> = std::result::Result<T, NompError>;

#[derive(Debug, Error)]
pub enum NompError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("duplicate frequency {0} in parameter set")]
    DuplicateFrequency(f64),

    #[error("degenerate atom: measurement of the sinusoid at {0} rad/sample has zero norm")]
    DegenerateAtom(f64),

    #[error("sinusoid {0} has zero gain; Fisher information is singular")]
    ZeroGain(usize),

    #[error("quadrature did not reach tolerance {tolerance:e} (estimated error {estimate:e})")]
    Quadrature { tolerance: f64, estimate: f64 },

    #[error("infeasible scenario: {0}")]
    Infeasible(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> NompError {
    NompError::InvalidArgument(msg.into())
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(NompError::DimensionMismatch { expected, found })
    }
}
