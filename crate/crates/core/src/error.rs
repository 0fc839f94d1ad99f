use thiserror::Error;

#[derive(Debug, Error)]
pub enum CtError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("FBP requires angles in [0, pi); found {0:.6} rad. Crop the two-ends padding before reconstructing")]
    PaddedAngles(f64),

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("automatic step size failed: power iteration estimate of the Lipschitz constant is {0}")]
    Lipschitz(f64),

    #[error("{path}: {message} (byte offset {offset})")]
    Format {
        path: String,
        offset: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CtError>;

pub(crate) fn mismatch(
    context: &'static str,
    expected: impl ToString,
    actual: impl ToString,
) -> CtError {
    CtError::DimensionMismatch {
        context,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
