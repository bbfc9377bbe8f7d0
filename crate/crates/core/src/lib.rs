//! Keypoint estimation for self-piercing rivet (SPR) joint cross-sections.
//!
//! The crate covers the whole pipeline:
//!
//! - [`phantom`]: procedural joint cross-sections with analytic keypoints, in a
//!   clean domain and a corrupted CT-like domain.
//! - [`dataio`]: manifests, configuration-exclusive splits and the
//!   crop/pad/resize preprocessing with its coordinate transform.
//! - [`heatmap`]: Gaussian target encoding and peak decoding.
//! - [`augment`]: random affine + blur augmentation applied consistently to
//!   images and keypoints.
//! - [`nn`]: the UNet heatmap regressor (forward, backward, Adam, checkpoints).
//! - [`train`]: pixel-wise BCE, the training loop, two-phase transfer learning
//!   and prediction.
//! - [`metrics`]: PCK, OKS and MPJPE.
//! - [`measure`]: head height, interlock and bottom thickness from keypoints.
//!
//! Coordinates follow one convention everywhere: `x` is the column (rightward),
//! `y` the row (downward), and the origin is the center of the top-left pixel.

pub mod affine;
pub mod augment;
pub mod dataio;
mod error;
pub mod heatmap;
pub mod io;
mod keypoints;
pub mod measure;
pub mod metrics;
pub mod nn;
pub mod phantom;
pub mod raster;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use keypoints::{KeypointSet, Point, NUM_KEYPOINTS};
pub use raster::Raster;
