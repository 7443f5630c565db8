//! Trajectory collection, reward normalization, GAE and the auxiliary buffer.

mod aux_buffer;
mod collect;
mod gae;
mod normalizer;

pub use aux_buffer::AuxBuffer;
pub use collect::{collect, Actor, ActorOutput, RolloutBatch};
pub use gae::{gae, normalize_advantages};
pub use normalizer::{RewardNormalizer, RunningMeanStd};

use crate::diffnet::{CategoricalError, NetError};
use crate::envsuite::EnvError;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RolloutError {
    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("rollout length must be at least 1")]
    EmptyRollout,
    #[error("{0} must lie in [0, 1], got {1}")]
    BadCoefficient(&'static str, f64),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Categorical(#[from] CategoricalError),
}
