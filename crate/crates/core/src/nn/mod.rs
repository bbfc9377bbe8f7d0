//! The heatmap UNet, written directly on top of a GEMM kernel.

mod adam;
mod checkpoint;
pub mod ops;
mod scalar;
mod unet;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{decode_weights, encode_weights, load_checkpoint, save_checkpoint, sidecar_path, Sidecar};
pub use scalar::Scalar;
pub use unet::{sigmoid, ForwardCache, ModelConfig, Param, Unet, OUTPUT_PRIOR, PROB_EPS};
