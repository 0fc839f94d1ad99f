//! Two-step sparse-view CT reconstruction: a sinogram inpainting network
//! (SIN) followed by FBP cascades and a refinement network (PRN).

pub mod augment;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod inference;
pub mod train;

pub use data::DeskGeometry;
pub use error::{PipelineError, Result};
