use serde::{Deserialize, Serialize};

use crate::diffnet::{dot, per_sample_value_grad, NetError, ParamSet, Real};

/// Cosine of two gradients, `None` when either has zero norm.
pub fn stiffness(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return None;
    }
    Some((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Mean stiffness over all unordered pairs of a batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseStiffness {
    pub mean: f64,
    /// Unordered pairs that entered the mean.
    pub pairs: usize,
    /// Gradients dropped for having zero norm.
    pub skipped: usize,
}

/// Mean of `stiffness(g_i, g_j)` over `i < j`, ignoring zero gradients.
///
/// Uses `sum_{i<j} u_i.u_j = (|sum u|^2 - sum |u_i|^2) / 2` on unit vectors,
/// which is linear in the batch size.
pub fn mean_pairwise_stiffness(grads: &[Vec<f64>]) -> Option<PairwiseStiffness> {
    let dim = grads.first().map_or(0, Vec::len);
    let mut sum = vec![0.0f64; dim];
    let mut self_dots = 0.0;
    let mut k = 0usize;
    for g in grads {
        let norm = dot(g, g).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            continue;
        }
        let mut sq = 0.0;
        for (s, &x) in sum.iter_mut().zip(g) {
            let u = x / norm;
            *s += u;
            sq += u * u;
        }
        self_dots += sq;
        k += 1;
    }
    if k < 2 {
        return None;
    }
    let pairs = k * (k - 1) / 2;
    let cross = 0.5 * (dot(&sum, &sum) - self_dots);
    Some(PairwiseStiffness {
        mean: (cross / pairs as f64).clamp(-1.0, 1.0),
        pairs,
        skipped: grads.len() - k,
    })
}

/// Pairwise stiffness of the per-state value-objective gradients of a value
/// network given as one graph over `params`.
pub fn value_stiffness<T: Real>(
    params: &ParamSet<T>,
    graph: &crate::diffnet::Graph,
    states: &[T],
    targets: &[T],
) -> Result<Option<PairwiseStiffness>, NetError> {
    let grads: Vec<Vec<f64>> = per_sample_value_grad(params, graph, states, targets)?
        .iter()
        .map(|g| g.flatten().into_iter().map(Real::as_f64).collect())
        .collect();
    Ok(mean_pairwise_stiffness(&grads))
}
