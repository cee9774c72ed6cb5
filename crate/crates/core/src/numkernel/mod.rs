//! Dense tensors with a recording tape for reverse-mode differentiation.
//!
//! Everything the GRU encoder/decoder needs lives here: a handful of
//! forward kernels, their vector-Jacobian products, deterministic random
//! streams, and a central-difference oracle used by the gradient tests.

mod gradcheck;
mod rng;
mod tape;
mod tensor;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};
use thiserror::Error;

pub use gradcheck::{finite_diff, max_relative_error};
pub use rng::Streams;
pub use tape::{Gradients, NodeId, Op, Tape};
pub use tensor::Tensor;

/// Floating-point element type. Training runs in `f32`; gradient checks in `f64`.
pub trait Real:
    Float + FromPrimitive + Default + Debug + Display + Send + Sync + Sum + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).unwrap()
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} does not hold {len} values")]
    BadData { shape: Vec<usize>, len: usize },
    #[error("{op}: non-finite value in output")]
    NonFinite { op: &'static str },
    #[error("{op}: index {index} out of range for {bound}")]
    Index {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("softmax row {row} has every position masked")]
    AllMasked { row: usize },
    #[error("backward: loss node has shape {0:?}, expected a scalar")]
    NotScalar(Vec<usize>),
    #[error("{0}")]
    Invalid(String),
}
