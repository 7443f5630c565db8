use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{make_env, EnvError, EnvInstance, EnvParams, Family, LevelSpec};

/// How a finished environment picks its next level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Resample {
    /// Uniformly from the configured level list.
    Uniform,
    /// Environment `i` always replays `levels[i % levels.len()]`.
    Fixed,
}

/// Bookkeeping for one finished episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub env_index: usize,
    pub level_seed: u64,
    /// Undiscounted sum of raw rewards.
    pub episode_return: f32,
    /// `sum_t gamma^t r_t` over raw rewards.
    pub discounted_return: f64,
    pub length: u32,
    /// Value prediction at the first state, if the collector supplied one.
    pub start_value: Option<f32>,
}

/// Output of one batched step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VectorStep {
    pub rewards: Vec<f32>,
    pub dones: Vec<bool>,
    pub truncated: Vec<bool>,
    /// Observation right after the step, before any auto-reset.
    pub next_obs: Vec<f32>,
    pub finished: Vec<EpisodeSummary>,
}

/// A batch of environment instances with automatic reset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorEnv {
    family: Family,
    params: EnvParams,
    levels: Vec<u64>,
    resample: Resample,
    envs: Vec<EnvInstance>,
    rng: ChaCha8Rng,
    gamma: f64,
    returns: Vec<f32>,
    discounted: Vec<f64>,
    discount: Vec<f64>,
    start_values: Vec<Option<f32>>,
}

impl VectorEnv {
    pub fn new(
        family: Family,
        params: EnvParams,
        levels: Vec<u64>,
        n_envs: usize,
        resample: Resample,
        rng: ChaCha8Rng,
        gamma: f64,
    ) -> Result<Self, EnvError> {
        if levels.is_empty() || n_envs == 0 {
            return Err(EnvError::Empty);
        }
        let mut venv = Self {
            family,
            params,
            levels,
            resample,
            envs: Vec::with_capacity(n_envs),
            rng,
            gamma,
            returns: vec![0.0; n_envs],
            discounted: vec![0.0; n_envs],
            discount: vec![1.0; n_envs],
            start_values: vec![None; n_envs],
        };
        for i in 0..n_envs {
            let seed = venv.pick_level(i);
            venv.envs.push(make_env(
                LevelSpec {
                    family,
                    level_seed: seed,
                },
                &venv.params,
            ));
        }
        Ok(venv)
    }

    fn pick_level(&mut self, index: usize) -> u64 {
        match self.resample {
            Resample::Uniform => self.levels[self.rng.gen_range(0..self.levels.len())],
            Resample::Fixed => self.levels[index % self.levels.len()],
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn n_envs(&self) -> usize {
        self.envs.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.envs[0].obs_dim()
    }

    pub fn num_actions(&self) -> usize {
        self.envs[0].num_actions()
    }

    pub fn levels(&self) -> &[u64] {
        &self.levels
    }

    pub fn env(&self, index: usize) -> &EnvInstance {
        &self.envs[index]
    }

    pub fn write_observations(&self, out: &mut [f32]) {
        let d = self.obs_dim();
        for (i, env) in self.envs.iter().enumerate() {
            env.write_observation(&mut out[i * d..(i + 1) * d]);
        }
    }

    pub fn observations(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.n_envs() * self.obs_dim()];
        self.write_observations(&mut out);
        out
    }

    /// Records value predictions for environments sitting at the first
    /// state of an episode. Predictions for other environments are ignored.
    pub fn note_values(&mut self, values: &[f32]) {
        for (i, env) in self.envs.iter().enumerate() {
            if env.episode_steps() == 0 && self.start_values[i].is_none() {
                self.start_values[i] = values.get(i).copied();
            }
        }
    }

    pub fn step(&mut self, actions: &[usize]) -> Result<VectorStep, EnvError> {
        let n = self.n_envs();
        if actions.len() != n {
            return Err(EnvError::ActionCount {
                expected: n,
                got: actions.len(),
            });
        }
        let d = self.obs_dim();
        let mut out = VectorStep {
            rewards: Vec::with_capacity(n),
            dones: Vec::with_capacity(n),
            truncated: Vec::with_capacity(n),
            next_obs: vec![0.0; n * d],
            finished: Vec::new(),
        };
        for (i, &action) in actions.iter().enumerate() {
            let step = self.envs[i].step(action)?;
            self.returns[i] += step.reward;
            self.discounted[i] += self.discount[i] * step.reward as f64;
            self.discount[i] *= self.gamma;
            self.envs[i].write_observation(&mut out.next_obs[i * d..(i + 1) * d]);
            out.rewards.push(step.reward);
            out.dones.push(step.done);
            out.truncated.push(step.truncated);
            if step.done {
                out.finished.push(EpisodeSummary {
                    env_index: i,
                    level_seed: self.envs[i].level_seed(),
                    episode_return: self.returns[i],
                    discounted_return: self.discounted[i],
                    length: self.envs[i].episode_steps(),
                    start_value: self.start_values[i],
                });
                self.returns[i] = 0.0;
                self.discounted[i] = 0.0;
                self.discount[i] = 1.0;
                self.start_values[i] = None;
                let seed = self.pick_level(i);
                if seed == self.envs[i].level_seed() {
                    self.envs[i].reset();
                } else {
                    self.envs[i] = make_env(
                        LevelSpec {
                            family: self.family,
                            level_seed: seed,
                        },
                        &self.params,
                    );
                }
            }
        }
        Ok(out)
    }
}
