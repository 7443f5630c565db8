//! Minimal reverse-mode differentiable network core.
//!
//! Networks are sequential [`Graph`]s of dense layers and activations whose
//! parameters live in a separate [`ParamSet`]. Everything numeric is generic
//! over [`Real`] so the same code runs in 32-bit training mode and in a
//! 64-bit shadow mode used for finite-difference gradient checks.

mod adam;
mod categorical;
mod checkpoint;
mod gradcheck;
mod graph;
mod params;
mod per_sample;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

pub use adam::{AdamConfig, AdamState};
pub use categorical::{
    entropy, kl_divergence, log_prob, log_softmax, sample, softmax, CategoricalError,
};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, Checkpoint, CheckpointError};
pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{central_difference_check, GradCheckReport};
pub use graph::{Activation, ForwardCache, Graph, Node};
pub use params::{ParamEntry, ParamSet};
pub use per_sample::{batch_value_grad, per_sample_value_grad};

/// Floating point scalar usable by the network core.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into this scalar type.
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Errors raised by graph evaluation and parameter handling.
#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NetError {
    #[error("shape mismatch at {node}: expected {expected} values, got {got}")]
    ShapeMismatch {
        node: String,
        expected: usize,
        got: usize,
    },
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("backward called without a forward cache")]
    NoForwardCache,
    #[error("forward cache is stale: parameters changed since the forward pass")]
    StaleCache,
    #[error("empty batch")]
    EmptyBatch,
}

/// Dot product with eight independent partial sums.
///
/// The summation order is fixed by the code, so results are bitwise
/// reproducible, while the lanes let the compiler vectorize.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [T::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let base = c * 8;
        for l in 0..8 {
            lanes[l] += a[base + l] * b[base + l];
        }
    }
    let mut tail = T::zero();
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3]))
        + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]))
        + tail
}

/// `acc[i] += scale * x[i]`
#[inline]
pub(crate) fn axpy<T: Real>(acc: &mut [T], scale: T, x: &[T]) {
    debug_assert_eq!(acc.len(), x.len());
    for (a, &v) in acc.iter_mut().zip(x) {
        *a += scale * v;
    }
}
