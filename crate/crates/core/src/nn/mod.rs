//! Dense networks with exact reverse-mode gradients, Adam, and parameter
//! checkpoints.

mod adam;
mod checkpoint;
mod net;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, NamedArray};
pub use net::{relu, sigmoid, silu, silu_derivative, softplus, Activation, DenseNet, GradientTape, Linear};
