//! Losses and regularizers as functions of network outputs.
//!
//! Every function returns the scalar together with its gradient with respect
//! to the network outputs it consumes, so the algorithm layer only has to
//! push those gradients back through the graphs. Objectives that are
//! maximized (surrogate, entropy, dynamics) are returned as-is; the sign flip
//! to a minimized loss happens in [`LossBundle`].

mod bundle;
mod dynamics;
mod policy;
mod value;

pub use bundle::{LossBundle, Term};
pub use dynamics::{
    dynamics_objective, dynamics_variants, negative_actions, negative_state_indices,
    DiscriminatorLogits, DynamicsKind, DynamicsOutput, PROB_CLAMP,
};
pub use policy::{entropy_bonus, policy_objective, policy_regularizer};
pub use value::{activation_regularized_value, aux_value_objective, value_objective, value_regularizer};

use crate::diffnet::CategoricalError;

/// A scalar objective and its gradient with respect to one output tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Objective<T> {
    pub value: T,
    pub grad: Vec<T>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ObjectiveError {
    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite probability ratio at sample {0}")]
    NonFiniteRatio(usize),
    #[error("clip range must be positive, got {0}")]
    BadClip(f64),
    #[error("negative sampling needs at least {needed} candidates, got {got}")]
    TooFewCandidates { needed: usize, got: usize },
    #[error("missing discriminator input: {0}")]
    MissingInput(&'static str),
    #[error(transparent)]
    Categorical(#[from] CategoricalError),
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), ObjectiveError> {
    if expected == got {
        Ok(())
    } else {
        Err(ObjectiveError::LengthMismatch { what, expected, got })
    }
}
