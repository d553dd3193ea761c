//! Minimal deterministic neural-network kernel.
//!
//! Activations are stored channel-major: a 2-D activation of shape
//! `[channels, time]` keeps each channel's time series contiguous.
//! Convolutions and pooling run along the time axis.

mod layer;
pub mod loss;
mod net;
pub mod optim;
mod tensor;

pub use layer::LayerSpec;
pub use loss::{binary_cross_entropy, categorical_cross_entropy, LOG_EPSILON};
pub use net::{Backward, Gradients, Mode, NeuralNet, Trace};
pub use optim::{Adam, AdamConfig};
pub use tensor::Tensor;
