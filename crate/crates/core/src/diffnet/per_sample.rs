use super::{NetError, ParamSet, Real};
use super::graph::{ForwardCache, Graph};

/// Gradient of `1/2 (V(s_i) - target_i)^2` for every sample separately.
///
/// `value_graph` maps one observation row to a single scalar. Each element
/// is produced by its own single-sample forward/backward pass.
pub fn per_sample_value_grad<T: Real>(
    params: &ParamSet<T>,
    value_graph: &Graph,
    states: &[T],
    targets: &[T],
) -> Result<Vec<ParamSet<T>>, NetError> {
    let dim = value_graph.input_dim();
    if targets.is_empty() {
        return Err(NetError::EmptyBatch);
    }
    if states.len() != targets.len() * dim {
        return Err(NetError::ShapeMismatch {
            node: format!("{}: states", value_graph.name()),
            expected: targets.len() * dim,
            got: states.len(),
        });
    }
    if value_graph.output_dim() != 1 {
        return Err(NetError::ShapeMismatch {
            node: format!("{}: output", value_graph.name()),
            expected: 1,
            got: value_graph.output_dim(),
        });
    }
    let mut cache = ForwardCache::default();
    let mut out = Vec::with_capacity(targets.len());
    for (i, &target) in targets.iter().enumerate() {
        value_graph.forward_into(params, &states[i * dim..(i + 1) * dim], 1, &mut cache)?;
        let residual = cache.output()[0] - target;
        let mut grads = params.zeros_like();
        value_graph.backward(params, &cache, &[residual], &mut grads, false)?;
        out.push(grads);
    }
    Ok(out)
}

/// Gradient of the batch-mean value objective `mean_i 1/2 (V(s_i) - target_i)^2`.
pub fn batch_value_grad<T: Real>(
    params: &ParamSet<T>,
    value_graph: &Graph,
    states: &[T],
    targets: &[T],
) -> Result<ParamSet<T>, NetError> {
    if targets.is_empty() {
        return Err(NetError::EmptyBatch);
    }
    let n = targets.len();
    let cache = value_graph.forward(params, states, n)?;
    let inv = T::one() / T::lit(n as f64);
    let upstream: Vec<T> = cache
        .output()
        .iter()
        .zip(targets)
        .map(|(&v, &t)| (v - t) * inv)
        .collect();
    let mut grads = params.zeros_like();
    value_graph.backward(params, &cache, &upstream, &mut grads, false)?;
    Ok(grads)
}
