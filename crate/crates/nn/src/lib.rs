//! A small feed-forward neural-network engine with hand-written
//! backpropagation.
//!
//! Networks are an ordered list of layers evaluated front to back. Each
//! layer reads the previous layer's output, except [`LayerKind::Concat`],
//! which stacks the outputs of any earlier layers (or the network input)
//! along the channel axis; that is enough to express densely connected
//! convolutional stacks. Everything is generic over [`Real`], so the same
//! network can train in `f32` and be replayed in `f64` for gradient checks.

mod checkpoint;
mod conv;
mod error;
mod layer;
mod loss;
mod network;
mod optim;
mod real;
mod tensor;

pub use checkpoint::{decode_network, encode_network, load_network, save_network, CTN1_MAGIC};
pub use error::{NnError, Result};
pub use layer::{Layer, LayerKind, Params, Source, DEFAULT_ELU_ALPHA, DEFAULT_LEAKY_SLOPE};
pub use loss::mse_loss;
pub use network::{Network, NetworkBuilder};
pub use optim::{sgd_step, Adam, AdamConfig, BiasCorrection, Optimizer, Sgd};
pub use real::Real;
pub use tensor::Tensor;
