use crate::agents::{Component, NetGraphs, NetParams};
use crate::diffnet::NetError;

/// Mean number of actions other than the taken one that the discriminator
/// accepts (`probability > 0.5`). `probabilities` is `rows x num_actions`:
/// the discriminator output for every candidate action of each transition.
pub fn ood_action_count(probabilities: &[f64], actions: &[usize], num_actions: usize) -> f64 {
    assert_eq!(probabilities.len(), actions.len() * num_actions);
    if actions.is_empty() {
        return 0.0;
    }
    let total: usize = actions
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let row = &probabilities[i * num_actions..(i + 1) * num_actions];
            row.iter().enumerate().filter(|&(b, &p)| b != a && p > 0.5).count()
        })
        .sum();
    total as f64 / actions.len() as f64
}

/// Forward-discriminator probabilities `f(s, a', s')` for every candidate
/// action `a'` of each transition, laid out `rows x num_actions`.
pub fn discriminator_probabilities(
    graphs: &NetGraphs,
    params: &NetParams<f32>,
    obs: &[f32],
    next_obs: &[f32],
    rows: usize,
) -> Result<Vec<f64>, NetError> {
    let disc = graphs
        .get(Component::Discriminator)
        .ok_or_else(|| NetError::MissingParam(Component::Discriminator.name().into()))?;
    let p = |c| params.get(c).expect("parameters exist for every graph");
    let enc = graphs.graph(Component::Encoder);
    let h = graphs.embed_dim;
    let k = graphs.num_actions;
    let e = enc.forward(p(Component::Encoder), obs, rows)?;
    let en = enc.forward(p(Component::Encoder), next_obs, rows)?;
    let width = 2 * h + k;
    let mut x = vec![0.0f32; rows * k * width];
    for i in 0..rows {
        for a in 0..k {
            let r = &mut x[(i * k + a) * width..(i * k + a + 1) * width];
            r[..h].copy_from_slice(&e.output()[i * h..(i + 1) * h]);
            r[h + a] = 1.0;
            r[h + k..].copy_from_slice(&en.output()[i * h..(i + 1) * h]);
        }
    }
    let logits = disc.forward(p(Component::Discriminator), &x, rows * k)?;
    Ok(logits
        .output()
        .iter()
        .map(|&z| 1.0 / (1.0 + (-(z as f64)).exp()))
        .collect())
}
