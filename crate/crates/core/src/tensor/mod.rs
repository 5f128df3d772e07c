//! Dense-tensor core with reverse-mode automatic differentiation.
//!
//! Values live in a [`Tape`] arena and are addressed by [`TensorId`]. The tape
//! records every differentiable operation during the forward pass and replays
//! them in reverse to accumulate gradients. Trainable values live in a
//! [`ParameterSet`] and are leased into a fresh tape for each forward pass.
//!
//! Two precision modes exist: `f64` for gradient-check work and `f32` for
//! training runs. A whole computation uses exactly one mode; the [`Scalar`]
//! trait is what makes the rest of the crate generic over the two.

pub mod gradcheck;
mod params;
mod tape;


pub use params::{BoundParams, ParameterSet};
pub use tape::{Padding, Tape, Tensor, TensorId};

use thiserror::Error;

/// Element type of a computation: `f32` (runtime mode) or `f64` (reference mode).
pub trait Scalar:
    num_traits::Float
    + num_traits::NumAssignOps
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> f32 {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> f64 {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Errors raised by tensor construction, operations, and the backward pass.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: axis {axis} out of range for rank {rank}")]
    AxisOutOfRange {
        op: &'static str,
        axis: usize,
        rank: usize,
    },
    #[error("{op}: {msg}")]
    Contract { op: &'static str, msg: String },
    #[error("parameter {name} has no gradient (run backward + absorb first)")]
    MissingGradient { name: String },
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Splits a shape around `axis` into (outer, len, inner) extents so that the
/// element (o, j, i) lives at offset `(o * len + j) * inner + i`.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}
