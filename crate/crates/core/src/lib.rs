//! Pedestrian trajectory prediction from sparse interaction graphs and scene
//! context.
//!
//! The pipeline observes 8 timesteps (3.2 s at 0.4 s per step) of pedestrian
//! positions and predicts the next 12. Per-window displacements feed a sparse
//! spatio-temporal interaction graph; a frame raster and an optional semantic
//! class grid feed small convolutional encoders whose tokens are fused into
//! the graph features by cross-attention; a dilated temporal convolutional
//! network decodes the fused features into future displacements. Everything
//! trains end-to-end by gradient descent on an ADE + FDE composite loss, and
//! an experiment runner evaluates scenes under the leave-one-out protocol.
//!
//! All numerics run on the in-crate reverse-mode tape ([`tensor`]); `f64` is
//! the gradient-check reference mode, `f32` the training mode.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod decoder;
pub mod fusion;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod report;
pub mod scene;
pub mod svg;
pub mod synth;
pub mod tensor;
pub mod train;

mod error;

#[cfg(test)]
pub(crate) mod test_support;

pub use error::Error;
