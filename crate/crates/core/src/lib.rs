//! Parallel-beam CT building blocks: projector/backprojector pair, ramp
//! filtering and FBP, angular sinogram manipulation, FISTA-TV, phantoms,
//! ROI-restricted metrics and the on-disk tensor/image formats.

pub mod baselines;
pub mod config;
pub mod error;
pub mod filtering;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod par;
pub mod phantom;
pub mod sinogram_ops;

pub use error::{CtError, Result};
pub use geometry::{backproject, radon_forward, Geometry, Image, Sinogram};
pub use par::Execution;
