use rand_chacha::ChaCha8Rng;

use crate::diffnet::{log_prob, sample, NetError};
use crate::envsuite::{EpisodeSummary, VectorEnv};

use super::{gae, RewardNormalizer, RolloutError};

/// Network outputs for one batch of observations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActorOutput {
    /// `rows x actions` policy logits.
    pub logits: Vec<f32>,
    /// Value used for advantages.
    pub values: Vec<f32>,
    /// Second value stream kept only for its own regression targets.
    pub alt_values: Option<Vec<f32>>,
}

/// Anything that maps observations to policy logits and value estimates.
pub trait Actor {
    fn act(&mut self, obs: &[f32], rows: usize) -> Result<ActorOutput, NetError>;
}

impl<F> Actor for F
where
    F: FnMut(&[f32], usize) -> Result<ActorOutput, NetError>,
{
    fn act(&mut self, obs: &[f32], rows: usize) -> Result<ActorOutput, NetError> {
        self(obs, rows)
    }
}

/// One rollout of `steps x n_envs` transitions stored time-major.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBatch {
    pub steps: usize,
    pub n_envs: usize,
    pub obs_dim: usize,
    pub num_actions: usize,
    pub obs: Vec<f32>,
    /// True successor observation, taken before any auto-reset.
    pub next_obs: Vec<f32>,
    pub actions: Vec<usize>,
    pub raw_rewards: Vec<f32>,
    pub rewards: Vec<f32>,
    pub dones: Vec<bool>,
    pub logits: Vec<f32>,
    pub log_probs: Vec<f32>,
    pub values: Vec<f32>,
    pub alt_values: Option<Vec<f32>>,
    pub bootstrap: Vec<f32>,
    pub alt_bootstrap: Option<Vec<f32>>,
    pub advantages: Vec<f32>,
    pub targets: Vec<f32>,
    pub alt_targets: Option<Vec<f32>>,
    pub finished: Vec<EpisodeSummary>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.steps * self.n_envs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn obs_row(&self, i: usize) -> &[f32] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    /// Fills advantages and targets from the normalized rewards.
    pub fn compute_returns(&mut self, gamma: f64, lambda: f64) -> Result<(), RolloutError> {
        let (adv, targets) = gae(
            &self.rewards,
            &self.values,
            &self.dones,
            &self.bootstrap,
            gamma,
            lambda,
        )?;
        self.advantages = adv;
        self.targets = targets;
        self.alt_targets = match (&self.alt_values, &self.alt_bootstrap) {
            (Some(v), Some(b)) => Some(gae(&self.rewards, v, &self.dones, b, gamma, lambda)?.1),
            _ => None,
        };
        Ok(())
    }
}

fn check_output(out: &ActorOutput, rows: usize, actions: usize) -> Result<(), RolloutError> {
    let checks = [
        ("logits", rows * actions, out.logits.len()),
        ("values", rows, out.values.len()),
        (
            "alt_values",
            rows,
            out.alt_values.as_ref().map_or(rows, Vec::len),
        ),
    ];
    for (what, expected, got) in checks {
        if expected != got {
            return Err(RolloutError::LengthMismatch { what, expected, got });
        }
    }
    Ok(())
}

/// Runs `actor` for `steps` vector steps, sampling actions with `rng`.
///
/// Behavior logits, log-probabilities and values are recorded as seen at
/// collection time, plus bootstrap values for the state after the last step.
/// Advantages are left empty; call [`RolloutBatch::compute_returns`].
pub fn collect<A: Actor + ?Sized>(
    actor: &mut A,
    venv: &mut VectorEnv,
    steps: usize,
    rng: &mut ChaCha8Rng,
    mut normalizer: Option<&mut RewardNormalizer>,
) -> Result<RolloutBatch, RolloutError> {
    if steps == 0 {
        return Err(RolloutError::EmptyRollout);
    }
    let b = venv.n_envs();
    let d = venv.obs_dim();
    let k = venv.num_actions();
    let n = steps * b;
    let mut batch = RolloutBatch {
        steps,
        n_envs: b,
        obs_dim: d,
        num_actions: k,
        obs: Vec::with_capacity(n * d),
        next_obs: Vec::with_capacity(n * d),
        actions: Vec::with_capacity(n),
        raw_rewards: Vec::with_capacity(n),
        rewards: Vec::with_capacity(n),
        dones: Vec::with_capacity(n),
        logits: Vec::with_capacity(n * k),
        log_probs: Vec::with_capacity(n),
        values: Vec::with_capacity(n),
        ..RolloutBatch::default()
    };
    let mut alt_values = Vec::new();
    let mut has_alt = false;
    let mut obs = vec![0.0; b * d];
    for _ in 0..steps {
        venv.write_observations(&mut obs);
        let out = actor.act(&obs, b)?;
        check_output(&out, b, k)?;
        let scale = normalizer.as_ref().map_or(1.0, |n| n.scale());
        let raw_values: Vec<f32> = out.values.iter().map(|&v| (v as f64 * scale) as f32).collect();
        venv.note_values(&raw_values);
        let mut actions = Vec::with_capacity(b);
        for e in 0..b {
            let row = &out.logits[e * k..(e + 1) * k];
            let a = sample(row, rng)?;
            batch.log_probs.push(log_prob(row, a)?);
            actions.push(a);
        }
        let step = venv.step(&actions)?;
        let scaled = match normalizer.as_deref_mut() {
            Some(norm) => norm.normalize(&step.rewards, &step.dones),
            None => step.rewards.clone(),
        };
        batch.obs.extend_from_slice(&obs);
        batch.next_obs.extend_from_slice(&step.next_obs);
        batch.actions.extend_from_slice(&actions);
        batch.raw_rewards.extend_from_slice(&step.rewards);
        batch.rewards.extend_from_slice(&scaled);
        batch.dones.extend_from_slice(&step.dones);
        batch.logits.extend_from_slice(&out.logits);
        batch.values.extend_from_slice(&out.values);
        if let Some(alt) = &out.alt_values {
            has_alt = true;
            alt_values.extend_from_slice(alt);
        }
        batch.finished.extend(step.finished);
    }
    venv.write_observations(&mut obs);
    let last = actor.act(&obs, b)?;
    check_output(&last, b, k)?;
    batch.bootstrap = last.values;
    if has_alt {
        batch.alt_values = Some(alt_values);
        batch.alt_bootstrap = last.alt_values;
    }
    Ok(batch)
}
