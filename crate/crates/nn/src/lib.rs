//! Small differentiable-network kit: layers with hand-written backward
//! passes, U-Net and patch-discriminator builders, training losses and Adam.

pub mod adam;
pub mod builders;
pub mod conv;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod losses;
pub mod network;
pub mod scalar;
pub mod tensor;

pub use error::{NnError, Result};
pub use layers::{LayerSpec, Mode};
pub use network::{Network, NetworkSpec, OpSpec, Role, Tape};
pub use scalar::Scalar;
pub use tensor::Tensor;
