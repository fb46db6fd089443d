use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A value lies outside the domain where a model or quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Caller violated an operation contract (shapes, missing state, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Shape {
        expected: (usize, usize),
        got: (usize, usize),
    },

    /// A trace record has `||W||_inf >= tau`, so the amplification factor diverges.
    #[error("saturation overflow at k={k}: ||W||_inf/tau = {ratio}")]
    SaturationOverflow { k: usize, ratio: f64 },

    #[error("insufficient records: need at least {needed}, have {have}")]
    InsufficientRecords { needed: usize, have: usize },

    #[error("dataset error: {0}")]
    Dataset(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_shape(expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected != got {
        return Err(Error::Shape { expected, got });
    }
    Ok(())
}
