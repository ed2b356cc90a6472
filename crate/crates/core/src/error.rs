use thiserror::Error;

/// A vector or buffer had the wrong number of elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("dimension mismatch: expected {expected}, found {actual}")]
pub struct ShapeError {
    pub expected: usize,
    pub actual: usize,
}

impl ShapeError {
    pub(crate) fn check(expected: usize, actual: usize) -> Result<(), ShapeError> {
        if expected == actual {
            Ok(())
        } else {
            Err(ShapeError { expected, actual })
        }
    }
}
