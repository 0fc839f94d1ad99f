use svct_core::CtError;
use svct_nn::NnError;
use thiserror::Error;

use crate::train::LossTrace;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Core(#[from] CtError),

    #[error(transparent)]
    Nn(#[from] NnError),

    #[error("training dataset is empty")]
    EmptyDataset,

    #[error("training diverged at iteration {iteration}: {message}")]
    Diverged {
        iteration: usize,
        message: String,
        trace: Box<LossTrace>,
    },

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PipelineError>;
