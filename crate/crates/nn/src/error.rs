use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{layer}: {message}")]
    Shape { layer: String, message: String },
    #[error("backward called on '{0}' without a recorded forward pass")]
    NoForward(String),
    #[error("{0}")]
    Loss(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Core(#[from] svct_core::CtError),
}

pub type Result<T> = std::result::Result<T, NnError>;

pub(crate) fn shape_err(layer: impl Into<String>, message: impl Into<String>) -> NnError {
    NnError::Shape {
        layer: layer.into(),
        message: message.into(),
    }
}
