use thiserror::Error;

/// Two operands disagree on a vector or matrix dimension.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("dimension mismatch for {what}: expected {expected}, found {found}")]
pub struct DimensionError {
    pub what: &'static str,
    pub expected: usize,
    pub found: usize,
}

impl DimensionError {
    pub(crate) fn check(what: &'static str, expected: usize, found: usize) -> Result<(), Self> {
        if expected == found {
            Ok(())
        } else {
            Err(Self { what, expected, found })
        }
    }
}
