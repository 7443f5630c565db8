use crate::diffnet::{ForwardCache, Graph, NetError, ParamSet, Real};
use crate::objectives::{
    activation_regularized_value, dynamics_variants, entropy_bonus, policy_objective,
    policy_regularizer, value_objective, value_regularizer, DiscriminatorLogits, DynamicsKind,
    LossBundle, ObjectiveError, Term,
};

use super::nets::{Component, NetGraphs, NetParams};

/// Coefficients of one update. `None` leaves a term out entirely; `Some(0.0)`
/// evaluates and logs the term without backpropagating it.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossWeights {
    pub policy: Option<f64>,
    pub clip: f64,
    pub entropy: Option<f64>,
    pub c_pi: Option<f64>,
    /// Regression of the shared value head on `targets`.
    pub shared_value: Option<f64>,
    /// Name under which the shared-head regression is logged.
    pub shared_value_term: Option<Term>,
    pub c_v: Option<f64>,
    /// Regression of the separate value network on `separate_targets`.
    pub separate_value: Option<f64>,
    /// Output penalty added to the separate value regression.
    pub alpha: f64,
    pub dynamics: Option<f64>,
    pub dynamics_kind: Option<DynamicsKind>,
    pub eta: f64,
}

/// Rows of one minibatch. Fields a given update does not use stay empty.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Minibatch<T> {
    pub rows: usize,
    pub obs: Vec<T>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<T>,
    pub advantages: Vec<T>,
    pub targets: Vec<T>,
    pub separate_targets: Vec<T>,
    pub value_snapshot: Vec<T>,
    pub logit_snapshot: Vec<T>,
    pub next_obs: Vec<T>,
    /// Row whose next state serves as the negative for each row.
    pub negative_state_index: Vec<usize>,
    pub negative_actions: Vec<usize>,
}

impl<T: Real> Minibatch<T> {
    pub fn cast<U: Real>(&self) -> Minibatch<U> {
        let c = |v: &Vec<T>| v.iter().map(|x| U::lit(x.as_f64())).collect::<Vec<U>>();
        Minibatch {
            rows: self.rows,
            obs: c(&self.obs),
            actions: self.actions.clone(),
            old_log_probs: c(&self.old_log_probs),
            advantages: c(&self.advantages),
            targets: c(&self.targets),
            separate_targets: c(&self.separate_targets),
            value_snapshot: c(&self.value_snapshot),
            logit_snapshot: c(&self.logit_snapshot),
            next_obs: c(&self.next_obs),
            negative_state_index: self.negative_state_index.clone(),
            negative_actions: self.negative_actions.clone(),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("term {0:?} would be recorded twice")]
    DuplicateTerm(Term),
    #[error("term {0:?} requested but the topology lacks {1:?}")]
    MissingComponent(Term, Component),
}

/// Loss values, parameter gradients of the combined loss, and the largest
/// output-gradient magnitude of each term.
#[derive(Clone, Debug)]
pub struct LossOutput<T> {
    pub bundle: LossBundle,
    pub grads: NetParams<T>,
    pub term_grad_max: Vec<(Term, f64)>,
}

impl<T> LossOutput<T> {
    pub fn term_grad_max(&self, term: Term) -> Option<f64> {
        self.term_grad_max.iter().find(|e| e.0 == term).map(|e| e.1)
    }
}

fn max_abs<T: Real>(v: &[T]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.as_f64().abs()))
}

fn add_scaled<T: Real>(acc: &mut [T], c: f64, g: &[T]) {
    let c = T::lit(c);
    for (a, &x) in acc.iter_mut().zip(g) {
        *a += c * x;
    }
}

fn require(graphs: &NetGraphs, term: Term, c: Component) -> Result<&Graph, LossError> {
    graphs.get(c).ok_or(LossError::MissingComponent(term, c))
}

fn record(bundle: &mut LossBundle, term: Term, value: f64, c: f64) -> Result<(), LossError> {
    if bundle.objective(term).is_some() {
        return Err(LossError::DuplicateTerm(term));
    }
    bundle.add(term, value, c);
    Ok(())
}

fn params<T: Real>(p: &NetParams<T>, c: Component) -> &ParamSet<T> {
    p.get(c).expect("parameters exist for every graph")
}

/// Evaluates the declared terms on `mb` and backpropagates the active ones.
pub fn evaluate_loss<T: Real>(
    graphs: &NetGraphs,
    p: &NetParams<T>,
    mb: &Minibatch<T>,
    w: &LossWeights,
) -> Result<LossOutput<T>, LossError> {
    let rows = mb.rows;
    let k = graphs.num_actions;
    let h = graphs.embed_dim;
    let mut bundle = LossBundle::new();
    let mut grads: NetParams<T> = NetParams::default();
    let mut term_grad_max = Vec::new();

    let wants_logits = w.policy.is_some() || w.entropy.is_some() || w.c_pi.is_some();
    let wants_shared_v = w.shared_value.is_some() || w.c_v.is_some();
    let wants_trunk = wants_logits || wants_shared_v || w.dynamics.is_some();

    if wants_trunk {
        let enc = graphs.graph(Component::Encoder);
        let enc_cache = enc.forward(params(p, Component::Encoder), &mb.obs, rows)?;
        let mut d_embed = vec![T::zero(); rows * h];
        let mut embed_touched = false;

        if wants_logits {
            let head = graphs.graph(Component::PolicyHead);
            let cache = head.forward(params(p, Component::PolicyHead), enc_cache.output(), rows)?;
            let logits = cache.output();
            let mut g = vec![T::zero(); rows * k];
            let mut touched = false;
            if let Some(c) = w.policy {
                let o = policy_objective(logits, &mb.old_log_probs, &mb.actions, &mb.advantages, w.clip)?;
                record(&mut bundle, Term::Policy, o.value.as_f64(), c)?;
                term_grad_max.push((Term::Policy, max_abs(&o.grad)));
                if c != 0.0 {
                    add_scaled(&mut g, -c, &o.grad);
                    touched = true;
                }
            }
            if let Some(c) = w.entropy {
                let o = entropy_bonus(logits, rows)?;
                record(&mut bundle, Term::Entropy, o.value.as_f64(), c)?;
                term_grad_max.push((Term::Entropy, max_abs(&o.grad)));
                if c != 0.0 {
                    add_scaled(&mut g, -c, &o.grad);
                    touched = true;
                }
            }
            if let Some(c) = w.c_pi {
                let o = policy_regularizer(&mb.logit_snapshot, logits, rows)?;
                record(&mut bundle, Term::CPi, o.value.as_f64(), c)?;
                term_grad_max.push((Term::CPi, max_abs(&o.grad)));
                if c != 0.0 {
                    add_scaled(&mut g, c, &o.grad);
                    touched = true;
                }
            }
            if touched {
                let slot = grads.grad_slot(Component::PolicyHead, p);
                let d = head.backward(params(p, Component::PolicyHead), &cache, &g, slot, true)?;
                add_scaled(&mut d_embed, 1.0, &d);
                embed_touched = true;
            }
        }

        if wants_shared_v {
            let head = graphs.graph(Component::ValueHead);
            let cache = head.forward(params(p, Component::ValueHead), enc_cache.output(), rows)?;
            let values = cache.output();
            let mut g = vec![T::zero(); rows];
            let mut touched = false;
            if let Some(c) = w.shared_value {
                let term = w.shared_value_term.unwrap_or(Term::Value);
                let o = value_objective(values, &mb.targets)?;
                record(&mut bundle, term, o.value.as_f64(), c)?;
                term_grad_max.push((term, max_abs(&o.grad)));
                if c != 0.0 {
                    add_scaled(&mut g, c, &o.grad);
                    touched = true;
                }
            }
            if let Some(c) = w.c_v {
                let o = value_regularizer(values, &mb.value_snapshot)?;
                record(&mut bundle, Term::CV, o.value.as_f64(), c)?;
                term_grad_max.push((Term::CV, max_abs(&o.grad)));
                if c != 0.0 {
                    add_scaled(&mut g, c, &o.grad);
                    touched = true;
                }
            }
            if touched {
                let slot = grads.grad_slot(Component::ValueHead, p);
                let d = head.backward(params(p, Component::ValueHead), &cache, &g, slot, true)?;
                add_scaled(&mut d_embed, 1.0, &d);
                embed_touched = true;
            }
        }

        let mut next_pass: Option<(ForwardCache<T>, Vec<T>)> = None;
        if let Some(c) = w.dynamics {
            let kind = w.dynamics_kind.unwrap_or(DynamicsKind::Joint);
            let disc = require(graphs, Term::Dynamics, Component::Discriminator)?;
            let next_cache = enc.forward(params(p, Component::Encoder), &mb.next_obs, rows)?;
            let emb = enc_cache.output();
            let next_emb = next_cache.output();
            let width = 2 * h + k;
            // Row layout: positives, then state negatives, then action negatives.
            let build = |state_neg: bool, action_neg: bool| {
                let blocks = 1 + state_neg as usize + action_neg as usize;
                let mut x = vec![T::zero(); blocks * rows * width];
                let mut sources = Vec::with_capacity(blocks * rows);
                let mut block = 0;
                let fill = |x: &mut [T], block: usize, next_of: &dyn Fn(usize) -> usize, act_of: &dyn Fn(usize) -> usize| {
                    for i in 0..rows {
                        let r = &mut x[(block * rows + i) * width..(block * rows + i + 1) * width];
                        r[..h].copy_from_slice(&emb[i * h..(i + 1) * h]);
                        r[h + act_of(i)] = T::one();
                        let j = next_of(i);
                        r[h + k..].copy_from_slice(&next_emb[j * h..(j + 1) * h]);
                    }
                };
                fill(&mut x, block, &|i| i, &|i| mb.actions[i]);
                sources.extend((0..rows).map(|i| (i, i)));
                block += 1;
                if state_neg {
                    fill(&mut x, block, &|i| mb.negative_state_index[i], &|i| mb.actions[i]);
                    sources.extend((0..rows).map(|i| (i, mb.negative_state_index[i])));
                    block += 1;
                }
                if action_neg {
                    fill(&mut x, block, &|i| i, &|i| mb.negative_actions[i]);
                    sources.extend((0..rows).map(|i| (i, i)));
                }
                (x, sources)
            };
            let split = |out: &[T], state_neg: bool, action_neg: bool| {
                let mut l = DiscriminatorLogits {
                    positive: out[..rows].to_vec(),
                    ..DiscriminatorLogits::default()
                };
                let mut at = rows;
                if state_neg {
                    l.negative_state = out[at..at + rows].to_vec();
                    at += rows;
                }
                if action_neg {
                    l.negative_action = out[at..at + rows].to_vec();
                }
                l
            };
            let join = |g: &DiscriminatorLogits<T>, state_neg: bool, action_neg: bool, scale: f64| {
                let mut v = g.positive.clone();
                if state_neg {
                    v.extend_from_slice(&g.negative_state);
                }
                if action_neg {
                    v.extend_from_slice(&g.negative_action);
                }
                let s = T::lit(scale);
                v.iter_mut().for_each(|x| *x *= s);
                v
            };
            let (first_state, first_action) = match kind {
                DynamicsKind::Joint => (true, true),
                DynamicsKind::Forward | DynamicsKind::ForwardInverse => (true, false),
                DynamicsKind::Inverse => (false, true),
            };
            let (x1, src1) = build(first_state, first_action);
            let n1 = src1.len();
            let cache1 = disc.forward(params(p, Component::Discriminator), &x1, n1)?;
            let l1 = split(cache1.output(), first_state, first_action);
            let second = if kind.needs_second_discriminator() {
                let disc2 = require(graphs, Term::Dynamics, Component::InverseDiscriminator)?;
                let (x2, src2) = build(false, true);
                let cache2 = disc2.forward(params(p, Component::InverseDiscriminator), &x2, src2.len())?;
                let l2 = split(cache2.output(), false, true);
                Some((disc2, cache2, src2, l2))
            } else {
                None
            };
            let eta = w.eta;
            let o = dynamics_variants(kind, &l1, second.as_ref().map(|s| &s.3), eta)?;
            record(&mut bundle, Term::Dynamics, o.value.as_f64(), c)?;
            let mut gmax = max_abs(&join(&o.grad, first_state, first_action, 1.0));
            if let Some(g2) = &o.grad_second {
                gmax = gmax.max(max_abs(&join(g2, false, true, 1.0)));
            }
            term_grad_max.push((Term::Dynamics, gmax));
            if c != 0.0 {
                let mut d_next = vec![T::zero(); rows * h];
                let mut route = |gx: &[T], sources: &[(usize, usize)], d_embed: &mut [T]| {
                    for (r, &(s, n)) in sources.iter().enumerate() {
                        let row = &gx[r * width..(r + 1) * width];
                        add_scaled(&mut d_embed[s * h..(s + 1) * h], 1.0, &row[..h]);
                        add_scaled(&mut d_next[n * h..(n + 1) * h], 1.0, &row[h + k..]);
                    }
                };
                let up1 = join(&o.grad, first_state, first_action, -c);
                let slot = grads.grad_slot(Component::Discriminator, p);
                let gx1 = disc.backward(params(p, Component::Discriminator), &cache1, &up1, slot, true)?;
                route(&gx1, &src1, &mut d_embed);
                if let (Some((disc2, cache2, src2, _)), Some(g2)) = (&second, &o.grad_second) {
                    let up2 = join(g2, false, true, -c);
                    let slot = grads.grad_slot(Component::InverseDiscriminator, p);
                    let gx2 = disc2.backward(params(p, Component::InverseDiscriminator), cache2, &up2, slot, true)?;
                    route(&gx2, src2, &mut d_embed);
                }
                embed_touched = true;
                next_pass = Some((next_cache, d_next));
            }
        }

        if embed_touched {
            let ep = params(p, Component::Encoder);
            let slot = grads.grad_slot(Component::Encoder, p);
            enc.backward(ep, &enc_cache, &d_embed, slot, false)?;
            if let Some((cache, d_next)) = next_pass {
                enc.backward(ep, &cache, &d_next, slot, false)?;
            }
        }
    }

    if let Some(c) = w.separate_value {
        let venc = require(graphs, Term::Value, Component::ValueEncoder)?;
        let vhead = require(graphs, Term::Value, Component::SeparateValueHead)?;
        let enc_cache = venc.forward(params(p, Component::ValueEncoder), &mb.obs, rows)?;
        let cache = vhead.forward(params(p, Component::SeparateValueHead), enc_cache.output(), rows)?;
        let o = activation_regularized_value(cache.output(), &mb.separate_targets, w.alpha)?;
        record(&mut bundle, Term::Value, o.value.as_f64(), c)?;
        if w.alpha != 0.0 {
            let n = rows as f64;
            let penalty = cache.output().iter().map(|v| 0.5 * w.alpha * v.as_f64().powi(2)).sum::<f64>() / n;
            record(&mut bundle, Term::ActivationReg, penalty, 0.0)?;
        }
        term_grad_max.push((Term::Value, max_abs(&o.grad)));
        if c != 0.0 {
            let s = T::lit(c);
            let g: Vec<T> = o.grad.iter().map(|&x| s * x).collect();
            let slot = grads.grad_slot(Component::SeparateValueHead, p);
            let d = vhead.backward(params(p, Component::SeparateValueHead), &cache, &g, slot, true)?;
            let slot = grads.grad_slot(Component::ValueEncoder, p);
            venc.backward(params(p, Component::ValueEncoder), &enc_cache, &d, slot, false)?;
        }
    }

    Ok(LossOutput {
        bundle,
        grads,
        term_grad_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Algorithm;
    use crate::diffnet::{central_difference_check, log_prob};
    use crate::harness::config::{NetworkSection, Preset, TrainConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_network() -> NetworkSection {
        NetworkSection {
            encoder_hidden: vec![6, 5],
            discriminator_hidden: vec![4],
            activation: crate::diffnet::Activation::Tanh,
        }
    }

    fn batch(graphs: &NetGraphs, p: &NetParams<f64>, rows: usize, seed: u64) -> Minibatch<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = graphs.obs_dim;
        let k = graphs.num_actions;
        let mut draw = |n: usize| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let obs = draw(rows * d);
        let next_obs = draw(rows * d);
        let advantages = draw(rows);
        let targets = draw(rows);
        let separate_targets = draw(rows);
        let value_snapshot = draw(rows);
        let logit_snapshot = draw(rows * k);
        let actions: Vec<usize> = (0..rows).map(|i| i % k).collect();
        let enc = graphs.graph(Component::Encoder).forward(p.get(Component::Encoder).unwrap(), &obs, rows).unwrap();
        let logits = graphs
            .graph(Component::PolicyHead)
            .forward(p.get(Component::PolicyHead).unwrap(), enc.output(), rows)
            .unwrap();
        let old_log_probs = (0..rows)
            .map(|i| log_prob(&logits.output()[i * k..(i + 1) * k], actions[i]).unwrap() - 0.05)
            .collect();
        Minibatch {
            rows,
            obs,
            actions: actions.clone(),
            old_log_probs,
            advantages,
            targets,
            separate_targets,
            value_snapshot,
            logit_snapshot,
            next_obs,
            negative_state_index: (0..rows).map(|i| (i + 1) % rows).collect(),
            negative_actions: actions.iter().map(|a| (a + 1) % k).collect(),
        }
    }

    fn check(algorithm: Algorithm, w: &LossWeights) {
        let graphs = NetGraphs::build(algorithm, 7, 3, &small_network());
        let p = graphs.init_params::<f64>(3);
        let mb = batch(&graphs, &p, 5, 9);
        let out = evaluate_loss(&graphs, &p, &mb, w).unwrap();
        let mut full = NetParams::default();
        for (c, q) in p.iter() {
            full.insert(c, out.grads.get(c).cloned().unwrap_or_else(|| q.zeros_like()));
        }
        let analytic = full.merged();
        let report = central_difference_check(&p.merged(), &analytic, 1e-5, 1e-6, |flat| {
            let q = NetParams::split_like(flat, &p);
            evaluate_loss(&graphs, &q, &mb, w).unwrap().bundle.combined()
        });
        assert!(report.passes(1e-4), "{algorithm:?}: {report:?}");
        assert!(report.checked > report.skipped_nonsmooth);
    }

    #[test]
    fn policy_phase_gradients() {
        let w = LossWeights {
            policy: Some(1.0),
            clip: 0.2,
            entropy: Some(0.01),
            shared_value: Some(0.5),
            c_v: Some(1.0),
            ..LossWeights::default()
        };
        check(Algorithm::Ppo, &w);
    }

    #[test]
    fn auxiliary_phase_gradients() {
        for (alg, kind, eta) in [
            (Algorithm::Ddcpg, DynamicsKind::Joint, 0.5),
            (Algorithm::DcpgF, DynamicsKind::Forward, 0.5),
            (Algorithm::DcpgI, DynamicsKind::Inverse, 0.5),
            (Algorithm::DcpgFi, DynamicsKind::ForwardInverse, 1.0),
        ] {
            let w = LossWeights {
                c_pi: Some(1.0),
                shared_value: Some(1.0),
                shared_value_term: Some(Term::AuxValue),
                dynamics: Some(1.0),
                dynamics_kind: Some(kind),
                eta,
                ..LossWeights::default()
            };
            check(alg, &w);
        }
    }

    #[test]
    fn separate_value_gradients() {
        let w = LossWeights {
            separate_value: Some(1.0),
            alpha: 0.05,
            c_pi: Some(1.0),
            shared_value: Some(1.0),
            shared_value_term: Some(Term::AuxValue),
            ..LossWeights::default()
        };
        check(Algorithm::PpgAr, &w);
        let clash = LossWeights {
            shared_value_term: None,
            ..w
        };
        let graphs = NetGraphs::build(Algorithm::PpgAr, 7, 3, &small_network());
        let p = graphs.init_params::<f64>(3);
        let mb = batch(&graphs, &p, 5, 9);
        assert_eq!(
            evaluate_loss(&graphs, &p, &mb, &clash).unwrap_err(),
            LossError::DuplicateTerm(Term::Value)
        );
    }

    #[test]
    fn zero_coefficient_terms_are_logged_not_backpropagated() {
        let cfg = TrainConfig::preset(Preset::Desk);
        let graphs = NetGraphs::build(Algorithm::Ddcpg, 7, 3, &cfg.network);
        let p = graphs.init_params::<f64>(1);
        let mb = batch(&graphs, &p, 4, 2);
        let w = LossWeights {
            shared_value: Some(1.0),
            dynamics: Some(0.0),
            dynamics_kind: Some(DynamicsKind::Joint),
            eta: 0.5,
            ..LossWeights::default()
        };
        let out = evaluate_loss(&graphs, &p, &mb, &w).unwrap();
        assert!(out.bundle.objective(Term::Dynamics).is_some());
        assert!(!out.grads.contains(Component::Discriminator));
        assert!(!out.grads.contains(Component::PolicyHead));
        assert!(out.grads.contains(Component::Encoder));
    }

    #[test]
    fn missing_component_is_reported() {
        let graphs = NetGraphs::build(Algorithm::Dcpg, 7, 3, &small_network());
        let p = graphs.init_params::<f64>(1);
        let mb = batch(&graphs, &p, 4, 2);
        let w = LossWeights {
            separate_value: Some(1.0),
            ..LossWeights::default()
        };
        assert_eq!(
            evaluate_loss(&graphs, &p, &mb, &w).unwrap_err(),
            LossError::MissingComponent(Term::Value, Component::ValueEncoder)
        );
    }
}
