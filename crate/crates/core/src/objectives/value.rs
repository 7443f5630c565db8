use crate::diffnet::Real;

use super::{check_len, Objective, ObjectiveError};

/// `mean 1/2 (V - R)^2`.
pub fn value_objective<T: Real>(values: &[T], targets: &[T]) -> Result<Objective<T>, ObjectiveError> {
    activation_regularized_value(values, targets, 0.0)
}

/// Same regression applied to an auxiliary or shared value head.
pub fn aux_value_objective<T: Real>(
    values: &[T],
    targets: &[T],
) -> Result<Objective<T>, ObjectiveError> {
    value_objective(values, targets)
}

/// `mean 1/2 (V - V_old)^2`; the snapshot is a constant.
pub fn value_regularizer<T: Real>(
    values: &[T],
    snapshot: &[T],
) -> Result<Objective<T>, ObjectiveError> {
    value_objective(values, snapshot)
}

/// `mean 1/2 (V - R)^2 + alpha/2 V^2`.
pub fn activation_regularized_value<T: Real>(
    values: &[T],
    targets: &[T],
    alpha: f64,
) -> Result<Objective<T>, ObjectiveError> {
    if values.is_empty() {
        return Err(ObjectiveError::EmptyBatch);
    }
    check_len("targets", values.len(), targets.len())?;
    let n = T::lit(values.len() as f64);
    let half = T::lit(0.5);
    let a = T::lit(alpha);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(values.len());
    for (&v, &t) in values.iter().zip(targets) {
        let r = v - t;
        total += half * r * r + half * a * v * v;
        grad.push((r + a * v) / n);
    }
    Ok(Objective {
        value: total / n,
        grad,
    })
}
