use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::Trainer;
use crate::diffnet::sample;
use crate::envsuite::{EnvError, Resample, VectorEnv};
use crate::harness::seeding;
use crate::rollout::{Actor, RolloutError};

/// Predicted and empirical initial-state values at one point of training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueBiasPoint {
    pub num_steps: u64,
    /// Mean discounted return from the first state, raw reward units.
    pub true_value_mean: f64,
    /// Mean prediction `V(s0)`, raw reward units.
    pub predicted_value_mean: f64,
    pub episodes: usize,
}

impl ValueBiasPoint {
    /// `predicted - true` relative to `|true|`.
    pub fn relative_gap(&self) -> f64 {
        (self.predicted_value_mean - self.true_value_mean) / self.true_value_mean.abs()
    }
}

pub type ValueBiasSeries = Vec<ValueBiasPoint>;

/// Plays `episodes` complete episodes one at a time in a single-environment
/// `venv`, sampling actions from `actor`. Returns `(V(s0) * value_scale,
/// discounted return)` per episode.
pub fn probe_episodes<A: Actor + ?Sized>(
    actor: &mut A,
    venv: &mut VectorEnv,
    episodes: usize,
    value_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(f64, f64)>, RolloutError> {
    if venv.n_envs() != 1 {
        return Err(RolloutError::Env(EnvError::ActionCount {
            expected: 1,
            got: venv.n_envs(),
        }));
    }
    let mut out = Vec::with_capacity(episodes);
    let mut start_value = None;
    while out.len() < episodes {
        let obs = venv.observations();
        let o = actor.act(&obs, 1)?;
        if venv.env(0).episode_steps() == 0 {
            start_value = Some(o.values[0] as f64 * value_scale);
        }
        let action = sample(&o.logits, rng)?;
        let step = venv.step(&[action])?;
        if let Some(ep) = step.finished.first() {
            out.push((start_value.take().unwrap_or(f64::NAN), ep.discounted_return));
        }
    }
    Ok(out)
}

/// Rolls `episodes` fresh episodes on the training levels under the current
/// policy and compares the value prediction at the first state with the
/// realized discounted return.
pub fn value_bias_probe(trainer: &Trainer, episodes: usize) -> Result<ValueBiasPoint, RolloutError> {
    let cfg = trainer.config();
    let tag = format!("value-bias/{}", trainer.num_steps());
    let mut venv = VectorEnv::new(
        cfg.env.family,
        cfg.env_params(),
        cfg.level_split().train,
        1,
        Resample::Uniform,
        seeding::stream(cfg.run.seed, &format!("{tag}/env")),
        cfg.ppo.gamma,
    )?;
    let mut rng = seeding::stream(cfg.run.seed, &format!("{tag}/policy"));
    let mut actor = |obs: &[f32], rows: usize| trainer.act(obs, rows);
    let pairs = probe_episodes(&mut actor, &mut venv, episodes, trainer.reward_scale(), &mut rng)?;
    let n = pairs.len().max(1) as f64;
    Ok(ValueBiasPoint {
        num_steps: trainer.num_steps(),
        true_value_mean: pairs.iter().map(|p| p.1).sum::<f64>() / n,
        predicted_value_mean: pairs.iter().map(|p| p.0).sum::<f64>() / n,
        episodes: pairs.len(),
    })
}
