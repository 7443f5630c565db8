use rand::seq::SliceRandom;
use rand::Rng;

use crate::diffnet::Real;

use super::{check_len, ObjectiveError};

/// Discriminator probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`
/// before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Which dynamics objective to optimize.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum DynamicsKind {
    /// One discriminator scoring true, next-state negative and action
    /// negative triples, the action term weighted by `eta`.
    Joint,
    /// Next-state negatives only.
    Forward,
    /// Action negatives only.
    Inverse,
    /// Forward term on the first discriminator plus an `eta`-weighted
    /// inverse term on a second one.
    ForwardInverse,
}

impl DynamicsKind {
    pub fn uses_state_negatives(self) -> bool {
        !matches!(self, DynamicsKind::Inverse)
    }

    pub fn uses_action_negatives(self) -> bool {
        !matches!(self, DynamicsKind::Forward)
    }

    pub fn needs_second_discriminator(self) -> bool {
        matches!(self, DynamicsKind::ForwardInverse)
    }
}

/// Discriminator logits for positive triples and the two kinds of negatives.
/// Unused negatives are left empty.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiscriminatorLogits<T> {
    pub positive: Vec<T>,
    pub negative_state: Vec<T>,
    pub negative_action: Vec<T>,
}

impl<T: Real> DiscriminatorLogits<T> {
    fn zeros_like(&self) -> Self {
        Self {
            positive: vec![T::zero(); self.positive.len()],
            negative_state: vec![T::zero(); self.negative_state.len()],
            negative_action: vec![T::zero(); self.negative_action.len()],
        }
    }
}

/// Dynamics objective value with gradients for each discriminator's logits.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsOutput<T> {
    pub value: T,
    pub grad: DiscriminatorLogits<T>,
    pub grad_second: Option<DiscriminatorLogits<T>>,
}

fn clamped_prob<T: Real>(logit: T) -> (T, bool) {
    let p = T::one() / (T::one() + (-logit).exp());
    let lo = T::lit(PROB_CLAMP);
    let hi = T::one() - lo;
    if p < lo {
        (lo, true)
    } else if p > hi {
        (hi, true)
    } else {
        (p, false)
    }
}

/// `log f` and its derivative with respect to the logit.
fn log_f<T: Real>(logit: T) -> (T, T) {
    let (p, clamped) = clamped_prob(logit);
    (p.ln(), if clamped { T::zero() } else { T::one() - p })
}

/// `log(1 - f)` and its derivative with respect to the logit.
fn log_one_minus_f<T: Real>(logit: T) -> (T, T) {
    let (p, clamped) = clamped_prob(logit);
    ((T::one() - p).ln(), if clamped { T::zero() } else { -p })
}

/// Accumulates `weight * mean term(x)` over `xs` into `total` and `grad`.
fn accumulate<T: Real>(
    xs: &[T],
    weight: T,
    inv_n: T,
    term: fn(T) -> (T, T),
    total: &mut T,
    grad: &mut [T],
) {
    for (&x, g) in xs.iter().zip(grad.iter_mut()) {
        let (v, d) = term(x);
        *total += weight * v * inv_n;
        *g += weight * d * inv_n;
    }
}

/// `mean log f(s,a,s') + log(1 - f(s,a,s_hat')) + eta log(1 - f(s,a_hat,s'))`.
pub fn dynamics_objective<T: Real>(
    logits: &DiscriminatorLogits<T>,
    eta: f64,
) -> Result<DynamicsOutput<T>, ObjectiveError> {
    dynamics_variants(DynamicsKind::Joint, logits, None, eta)
}

/// Evaluates the objective selected by `kind`. `second` carries the logits of
/// the separate inverse discriminator and is required for
/// [`DynamicsKind::ForwardInverse`].
pub fn dynamics_variants<T: Real>(
    kind: DynamicsKind,
    first: &DiscriminatorLogits<T>,
    second: Option<&DiscriminatorLogits<T>>,
    eta: f64,
) -> Result<DynamicsOutput<T>, ObjectiveError> {
    let n = first.positive.len();
    if n == 0 {
        return Err(ObjectiveError::EmptyBatch);
    }
    let inv_n = T::one() / T::lit(n as f64);
    let one = T::one();
    let eta = T::lit(eta);
    let mut total = T::zero();
    let mut grad = first.zeros_like();
    accumulate(&first.positive, one, inv_n, log_f, &mut total, &mut grad.positive);
    let mut grad_second = None;
    match kind {
        DynamicsKind::Joint | DynamicsKind::Forward | DynamicsKind::ForwardInverse => {
            check_len("negative_state", n, first.negative_state.len())?;
            accumulate(
                &first.negative_state,
                one,
                inv_n,
                log_one_minus_f,
                &mut total,
                &mut grad.negative_state,
            );
        }
        DynamicsKind::Inverse => {}
    }
    match kind {
        DynamicsKind::Joint | DynamicsKind::Inverse => {
            check_len("negative_action", n, first.negative_action.len())?;
            let w = if kind == DynamicsKind::Joint { eta } else { one };
            accumulate(
                &first.negative_action,
                w,
                inv_n,
                log_one_minus_f,
                &mut total,
                &mut grad.negative_action,
            );
        }
        DynamicsKind::ForwardInverse => {
            let s = second.ok_or(ObjectiveError::MissingInput("second discriminator"))?;
            check_len("second positive", n, s.positive.len())?;
            check_len("second negative_action", n, s.negative_action.len())?;
            let mut g2 = s.zeros_like();
            accumulate(&s.positive, eta, inv_n, log_f, &mut total, &mut g2.positive);
            accumulate(
                &s.negative_action,
                eta,
                inv_n,
                log_one_minus_f,
                &mut total,
                &mut g2.negative_action,
            );
            grad_second = Some(g2);
        }
        DynamicsKind::Forward => {}
    }
    Ok(DynamicsOutput {
        value: total,
        grad,
        grad_second,
    })
}

/// Index permutation with no fixed points, drawn by rejection: each row `i`
/// is paired with the next state of row `perm[i] != i`.
pub fn negative_state_indices<R: Rng + ?Sized>(
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>, ObjectiveError> {
    if n < 2 {
        return Err(ObjectiveError::TooFewCandidates { needed: 2, got: n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(rng);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return Ok(perm);
        }
    }
}

/// For each action, a uniform draw from the other `num_actions - 1` actions.
pub fn negative_actions<R: Rng + ?Sized>(
    actions: &[usize],
    num_actions: usize,
    rng: &mut R,
) -> Result<Vec<usize>, ObjectiveError> {
    if num_actions < 2 {
        return Err(ObjectiveError::TooFewCandidates {
            needed: 2,
            got: num_actions,
        });
    }
    Ok(actions
        .iter()
        .map(|&a| {
            let r = rng.gen_range(0..num_actions - 1);
            if r >= a {
                r + 1
            } else {
                r
            }
        })
        .collect())
}
