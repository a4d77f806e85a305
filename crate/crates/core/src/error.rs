use alloc::string::String;

/// Errors raised by model construction and the numerical routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// The supplied observation sequence has probability zero, so no
    /// posterior exists.
    #[error("observation sequence has zero probability under the model")]
    DegenerateEvidence,
    #[error("{count} observation sequences exceed the enumeration cap of {cap}")]
    EnumerationCap { count: u128, cap: u64 },
    #[error("discount {0} is not supported here (need 0 <= gamma < 1)")]
    UnsupportedDiscount(f64),
    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite { what: &'static str, iteration: usize },
    #[error("entropy estimate {value} outside [0, {upper}]")]
    BoundViolation { value: f64, upper: f64 },
    #[error("cell ({x}, {y}) is covered by more than one sensor")]
    OverlappingSensors { x: usize, y: usize },
    #[error("singular linear system")]
    Singular,
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_index(what: &'static str, index: usize, size: usize) -> Result<()> {
    if index < size {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { what, index, size })
    }
}
