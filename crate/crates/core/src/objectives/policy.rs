use crate::diffnet::{log_softmax, Real};

use super::{check_len, Objective, ObjectiveError};

fn row_width(total: usize, rows: usize) -> Result<usize, ObjectiveError> {
    if rows == 0 {
        return Err(ObjectiveError::EmptyBatch);
    }
    if total == 0 || total % rows != 0 {
        return Err(ObjectiveError::LengthMismatch {
            what: "logits",
            expected: rows * (total / rows).max(1),
            got: total,
        });
    }
    Ok(total / rows)
}

/// Clipped surrogate `mean min(rho A, clip(rho, 1 - eps, 1 + eps) A)`.
///
/// Gradient is with respect to `new_logits` (row-major, one row per sample).
pub fn policy_objective<T: Real>(
    new_logits: &[T],
    old_log_probs: &[T],
    actions: &[usize],
    advantages: &[T],
    clip: f64,
) -> Result<Objective<T>, ObjectiveError> {
    if clip.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(ObjectiveError::BadClip(clip));
    }
    let n = actions.len();
    let k = row_width(new_logits.len(), n)?;
    check_len("old_log_probs", n, old_log_probs.len())?;
    check_len("advantages", n, advantages.len())?;
    let lo = T::lit(1.0 - clip);
    let hi = T::lit(1.0 + clip);
    let inv_n = T::one() / T::lit(n as f64);
    let mut total = T::zero();
    let mut grad = vec![T::zero(); n * k];
    for i in 0..n {
        let row = &new_logits[i * k..(i + 1) * k];
        let lp = log_softmax(row)?;
        let a = actions[i];
        if a >= k {
            return Err(crate::diffnet::CategoricalError::ActionOutOfRange { action: a, actions: k }.into());
        }
        let ratio = (lp[a] - old_log_probs[i]).exp();
        if !ratio.is_finite() {
            return Err(ObjectiveError::NonFiniteRatio(i));
        }
        let adv = advantages[i];
        let unclipped = ratio * adv;
        let clipped = ratio.max(lo).min(hi) * adv;
        if unclipped <= clipped {
            total += unclipped;
            // d rho / d z_j = rho (1[j = a] - p_j)
            let scale = adv * ratio * inv_n;
            let g = &mut grad[i * k..(i + 1) * k];
            for (j, slot) in g.iter_mut().enumerate() {
                let ind = if j == a { T::one() } else { T::zero() };
                *slot = scale * (ind - lp[j].exp());
            }
        } else {
            total += clipped;
        }
    }
    Ok(Objective {
        value: total * inv_n,
        grad,
    })
}

/// `mean KL(pi_old || pi_new)`, gradient with respect to `new_logits`.
pub fn policy_regularizer<T: Real>(
    old_logits: &[T],
    new_logits: &[T],
    rows: usize,
) -> Result<Objective<T>, ObjectiveError> {
    let k = row_width(new_logits.len(), rows)?;
    check_len("old_logits", new_logits.len(), old_logits.len())?;
    let inv_n = T::one() / T::lit(rows as f64);
    let mut total = T::zero();
    let mut grad = vec![T::zero(); rows * k];
    for i in 0..rows {
        let lp = log_softmax(&old_logits[i * k..(i + 1) * k])?;
        let lq = log_softmax(&new_logits[i * k..(i + 1) * k])?;
        let mut kl = T::zero();
        for j in 0..k {
            let p = lp[j].exp();
            kl += p * (lp[j] - lq[j]);
            grad[i * k + j] = (lq[j].exp() - p) * inv_n;
        }
        total += kl;
    }
    Ok(Objective {
        value: total * inv_n,
        grad,
    })
}

/// Mean policy entropy, gradient with respect to `logits`.
pub fn entropy_bonus<T: Real>(logits: &[T], rows: usize) -> Result<Objective<T>, ObjectiveError> {
    let k = row_width(logits.len(), rows)?;
    let inv_n = T::one() / T::lit(rows as f64);
    let mut total = T::zero();
    let mut grad = vec![T::zero(); rows * k];
    for i in 0..rows {
        let lp = log_softmax(&logits[i * k..(i + 1) * k])?;
        let h = -lp.iter().map(|&l| l.exp() * l).sum::<T>();
        total += h;
        for j in 0..k {
            grad[i * k + j] = -lp[j].exp() * (lp[j] + h) * inv_n;
        }
    }
    Ok(Objective {
        value: total * inv_n,
        grad,
    })
}
