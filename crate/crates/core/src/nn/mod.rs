//! Deterministic CPU inference for the multi-frame MFRNet.

mod enhance;
mod model;
mod network;
mod ops;
mod tensor;

pub use enhance::{enhance_frame, enhance_sequence, tiled_residual, TileConfig};
pub use model::{load_weights, save_weights, LayerSpec, Model, NetworkConfig, MFMR_MAGIC, MFMR_VERSION};
pub use network::{forward, forward_residual, mfrb_forward, MIN_INPUT_SIZE};
pub use ops::{conv2d, leaky_relu, leaky_relu_in_place};
pub use tensor::Tensor;
