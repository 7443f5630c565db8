use std::collections::VecDeque;

use rand::seq::{index, SliceRandom};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{value_stiffness, PairwiseStiffness};
use crate::diffnet::{
    decode_checkpoint, encode_checkpoint, AdamConfig, AdamState, Checkpoint, CheckpointError,
    NetError, ParamSet,
};
use crate::envsuite::{num_actions, obs_dim, EnvError, Resample, VectorEnv};
use crate::harness::config::{ConfigError, TrainConfig};
use crate::harness::seeding;
use crate::objectives::{negative_actions, negative_state_indices, LossBundle, ObjectiveError, Term};
use crate::rollout::{
    collect, normalize_advantages, ActorOutput, AuxBuffer, RewardNormalizer, RolloutBatch,
    RolloutError,
};

use super::algorithm::Algorithm;
use super::loss::{evaluate_loss, LossError, LossOutput, LossWeights, Minibatch};
use super::nets::{Component, Group, NetGraphs, NetParams, PerComponent};
use super::schedule::{PhaseSchedule, UpdatePlan};

/// Finished episodes averaged into the train and test reward columns.
pub const EPISODE_WINDOW: usize = 100;

/// Format of the JSON state block inside a trainer checkpoint.
pub const STATE_VERSION: u32 = 1;

const FORWARD_CHUNK: usize = 1024;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("training diverged at rollout {rollout}: {detail}")]
    Divergence { rollout: u64, detail: String },
    #[error("trainer state: {0}")]
    State(String),
    #[error("training already finished")]
    Finished,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Policy,
    Auxiliary,
}

/// Update bookkeeping for one phase cycle (`n_pi` rollouts).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleCounters {
    pub rollouts: usize,
    /// Epochs that optimized the policy objective.
    pub policy_epochs: usize,
    /// Policy-phase epochs and minibatch updates carrying a value objective
    /// on the shared value head.
    pub shared_value_epochs_policy: usize,
    pub shared_value_updates_policy: usize,
    /// Auxiliary-phase epochs carrying a value objective on the shared head.
    pub shared_value_epochs_aux: usize,
    /// States fed to the shared-head value objective in each auxiliary epoch.
    pub aux_epoch_states: Vec<usize>,
    pub separate_value_epochs_policy: usize,
    pub separate_value_epochs_aux: usize,
    /// Size of the auxiliary buffer when the auxiliary phase started.
    pub aux_buffer_states: usize,
}

/// A snapshot regularizer evaluated on the first update of a phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizerProbe {
    pub rollout: u64,
    pub phase: Phase,
    pub term: Term,
    pub value: f64,
    /// Largest output-gradient magnitude of the term.
    pub grad_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StiffnessSample {
    pub num_steps: u64,
    pub stiffness: PairwiseStiffness,
}

/// One row of the metrics stream. Missing quantities are NaN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub num_steps: u64,
    pub train_episode_rewards_mean: f64,
    pub test_episode_rewards_mean: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub c_pi: f64,
    pub c_v: f64,
    pub dynamics_loss: f64,
    pub entropy: f64,
    pub predicted_init_value: f64,
    pub empirical_init_return: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Streams {
    policy: ChaCha8Rng,
    test_policy: ChaCha8Rng,
    minibatch: ChaCha8Rng,
    negatives: ChaCha8Rng,
    stiffness: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Self {
            policy: seeding::stream(seed, seeding::POLICY),
            test_policy: seeding::stream(seed, "test-policy-sampling"),
            minibatch: seeding::stream(seed, seeding::MINIBATCH),
            negatives: seeding::stream(seed, seeding::NEGATIVES),
            stiffness: seeding::stream(seed, "stiffness"),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SavedState {
    version: u32,
    config: String,
    config_hash: String,
    rollouts_done: u64,
    adam_steps: Vec<(Component, u64)>,
    train_env: VectorEnv,
    test_env: VectorEnv,
    normalizer: Option<RewardNormalizer>,
    streams: Streams,
    aux_actions: Vec<usize>,
    aux_rollouts: usize,
    train_returns: VecDeque<f32>,
    test_returns: VecDeque<f32>,
    counters: Vec<CycleCounters>,
    probes: Vec<RegularizerProbe>,
    stiffness: Vec<StiffnessSample>,
}

/// Policy logits and values for `rows` observations under `algorithm`.
pub fn act_with(
    graphs: &NetGraphs,
    params: &NetParams<f32>,
    algorithm: Algorithm,
    obs: &[f32],
    rows: usize,
) -> Result<ActorOutput, NetError> {
    let p = |c| params.get(c).expect("parameters exist for every graph");
    let enc = graphs.graph(Component::Encoder).forward(p(Component::Encoder), obs, rows)?;
    let logits = graphs
        .graph(Component::PolicyHead)
        .forward(p(Component::PolicyHead), enc.output(), rows)?
        .output()
        .to_vec();
    let shared = || -> Result<Vec<f32>, NetError> {
        Ok(graphs
            .graph(Component::ValueHead)
            .forward(p(Component::ValueHead), enc.output(), rows)?
            .output()
            .to_vec())
    };
    if !separate_value_drives_advantages(algorithm) {
        return Ok(ActorOutput {
            logits,
            values: shared()?,
            alt_values: None,
        });
    }
    let venc = graphs.graph(Component::ValueEncoder).forward(p(Component::ValueEncoder), obs, rows)?;
    let values = graphs
        .graph(Component::SeparateValueHead)
        .forward(p(Component::SeparateValueHead), venc.output(), rows)?
        .output()
        .to_vec();
    let alt_values = (algorithm == Algorithm::SeparateDcpg).then(shared).transpose()?;
    Ok(ActorOutput {
        logits,
        values,
        alt_values,
    })
}

/// Advantages come from the separate value network.
pub fn separate_value_drives_advantages(algorithm: Algorithm) -> bool {
    algorithm.is_ppg() || algorithm == Algorithm::SeparateDcpg
}

fn mean_or_nan(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn gather<T: Copy>(src: &[T], width: usize, idx: &[usize]) -> Vec<T> {
    let mut out = Vec::with_capacity(idx.len() * width);
    for &i in idx {
        out.extend_from_slice(&src[i * width..(i + 1) * width]);
    }
    out
}

/// `n` indices shuffled and cut into `m` near-equal consecutive chunks.
fn minibatches(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let m = m.clamp(1, n.max(1));
    (0..m).map(|j| perm[j * n / m..(j + 1) * n / m].to_vec()).collect()
}

fn push_window(window: &mut VecDeque<f32>, value: f32) {
    if window.len() == EPISODE_WINDOW {
        window.pop_front();
    }
    window.push_back(value);
}

/// Single-threaded trainer for every algorithm, advanced one rollout at a time.
pub struct Trainer {
    cfg: TrainConfig,
    schedule: PhaseSchedule,
    plan: UpdatePlan,
    graphs: NetGraphs,
    params: NetParams<f32>,
    adam: PerComponent<AdamState<f32>>,
    train_env: VectorEnv,
    test_env: VectorEnv,
    normalizer: Option<RewardNormalizer>,
    streams: Streams,
    aux: AuxBuffer,
    rollouts_done: u64,
    train_returns: VecDeque<f32>,
    test_returns: VecDeque<f32>,
    counters: Vec<CycleCounters>,
    probes: Vec<RegularizerProbe>,
    stiffness: Vec<StiffnessSample>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let seed = cfg.run.seed;
        let family = cfg.env.family;
        let env_params = cfg.env_params();
        let split = cfg.level_split();
        let d = obs_dim(family, &env_params);
        let k = num_actions(family);
        let graphs = NetGraphs::build(cfg.run.algorithm, d, k, &cfg.network);
        let params: NetParams<f32> = graphs.init_params(seed);
        let adam_config = AdamConfig {
            learning_rate: cfg.ppo.learning_rate,
            epsilon: cfg.ppo.adam_eps,
            ..AdamConfig::default()
        };
        let mut adam = PerComponent::default();
        for (c, p) in params.iter() {
            adam.insert(c, AdamState::new(adam_config, p));
        }
        let gamma = cfg.ppo.gamma;
        let train_env = VectorEnv::new(
            family,
            env_params.clone(),
            split.train,
            cfg.env.n_envs,
            Resample::Uniform,
            seeding::stream(seed, seeding::ENV),
            gamma,
        )?;
        let test_levels = if split.test.is_empty() {
            train_env.levels().to_vec()
        } else {
            split.test
        };
        let test_env = VectorEnv::new(
            family,
            env_params,
            test_levels,
            cfg.env.n_test_envs,
            Resample::Uniform,
            seeding::stream(seed, "test-env"),
            gamma,
        )?;
        let normalizer = cfg
            .ppo
            .reward_norm
            .then(|| RewardNormalizer::new(cfg.env.n_envs, gamma));
        Ok(Self {
            schedule: PhaseSchedule::from_config(&cfg),
            plan: UpdatePlan::new(&cfg),
            graphs,
            params,
            adam,
            train_env,
            test_env,
            normalizer,
            streams: Streams::new(seed),
            aux: AuxBuffer::new(d, k),
            rollouts_done: 0,
            train_returns: VecDeque::new(),
            test_returns: VecDeque::new(),
            counters: vec![CycleCounters::default()],
            probes: Vec::new(),
            stiffness: Vec::new(),
            cfg,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn algorithm(&self) -> Algorithm {
        self.cfg.run.algorithm
    }

    pub fn schedule(&self) -> &PhaseSchedule {
        &self.schedule
    }

    pub fn plan(&self) -> &UpdatePlan {
        &self.plan
    }

    pub fn graphs(&self) -> &NetGraphs {
        &self.graphs
    }

    pub fn params(&self) -> &NetParams<f32> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut NetParams<f32> {
        &mut self.params
    }

    pub fn total_rollouts(&self) -> u64 {
        self.cfg.total_rollouts()
    }

    pub fn rollouts_done(&self) -> u64 {
        self.rollouts_done
    }

    pub fn num_steps(&self) -> u64 {
        self.rollouts_done * self.cfg.rollout_size()
    }

    pub fn is_finished(&self) -> bool {
        self.rollouts_done >= self.total_rollouts()
    }

    pub fn aux_buffer(&self) -> &AuxBuffer {
        &self.aux
    }

    pub fn reward_scale(&self) -> f64 {
        self.normalizer.as_ref().map_or(1.0, RewardNormalizer::scale)
    }

    /// Completed cycles followed by the one in progress.
    pub fn counters(&self) -> &[CycleCounters] {
        &self.counters
    }

    pub fn probes(&self) -> &[RegularizerProbe] {
        &self.probes
    }

    pub fn stiffness_samples(&self) -> &[StiffnessSample] {
        &self.stiffness
    }

    pub fn act(&self, obs: &[f32], rows: usize) -> Result<ActorOutput, NetError> {
        act_with(&self.graphs, &self.params, self.algorithm(), obs, rows)
    }

    /// The value network whose predictions drive advantages, as one graph
    /// with its parameters.
    pub fn value_network(&self) -> Result<(crate::diffnet::Graph, ParamSet<f32>), NetError> {
        let (graph, parts) = self
            .graphs
            .value_network(separate_value_drives_advantages(self.algorithm()))?;
        let p = self.params.get(parts[0]).unwrap().merged(self.params.get(parts[1]).unwrap())?;
        Ok((graph, p))
    }

    /// Collects one rollout, runs the scheduled updates, and reports metrics.
    pub fn step_rollout(&mut self) -> Result<MetricsRow, TrainError> {
        if self.is_finished() {
            return Err(TrainError::Finished);
        }
        let steps = self.cfg.ppo.rollout_steps;
        let algorithm = self.algorithm();
        let (graphs, params) = (&self.graphs, &self.params);
        let mut actor = |obs: &[f32], rows: usize| act_with(graphs, params, algorithm, obs, rows);
        let mut batch = collect(
            &mut actor,
            &mut self.train_env,
            steps,
            &mut self.streams.policy,
            self.normalizer.as_mut(),
        )?;
        let test = collect(&mut actor, &mut self.test_env, steps, &mut self.streams.test_policy, None)?;
        batch.compute_returns(self.cfg.advantage_gamma(), self.cfg.ppo.gae_lambda)?;
        for ep in &batch.finished {
            push_window(&mut self.train_returns, ep.episode_return);
        }
        for ep in &test.finished {
            push_window(&mut self.test_returns, ep.episode_return);
        }

        // Stiffness is taken on the fresh rollout, before any update sees it.
        let interval = self.cfg.run.stiffness_interval;
        let due = match interval {
            0 => self.counters.last().unwrap().rollouts + 1 == self.schedule.n_pi,
            n => (self.rollouts_done + 1) % n == 0,
        };
        if self.cfg.run.stiffness_batch > 0 && due {
            self.measure_stiffness(&batch)?;
        }

        let mut bundles = Vec::new();
        self.policy_phase(&batch, &mut bundles)?;
        self.rollouts_done += 1;
        let cycle = self.counters.last_mut().unwrap();
        cycle.rollouts += 1;
        let cycle_done = cycle.rollouts == self.schedule.n_pi;
        if self.plan.auxiliary.is_some() {
            self.aux.push(&batch);
            if cycle_done {
                self.aux_phase(&mut bundles)?;
                self.aux.clear();
            }
        }
        if !self.params.all_finite() {
            return Err(self.divergence("non-finite parameters"));
        }
        if cycle_done {
            self.counters.push(CycleCounters::default());
        }
        Ok(self.metrics_row(&batch, &bundles))
    }

    fn divergence(&self, detail: impl Into<String>) -> TrainError {
        TrainError::Divergence {
            rollout: self.rollouts_done,
            detail: detail.into(),
        }
    }

    fn metrics_row(&self, batch: &RolloutBatch, bundles: &[LossBundle]) -> MetricsRow {
        let term = |t: Term| mean_or_nan(bundles.iter().filter_map(|b| b.objective(t)));
        let loss = |t: Term| mean_or_nan(bundles.iter().filter_map(|b| b.loss(t)));
        let value_loss = loss(Term::Value);
        MetricsRow {
            num_steps: self.num_steps(),
            train_episode_rewards_mean: mean_or_nan(self.train_returns.iter().map(|&r| r as f64)),
            test_episode_rewards_mean: mean_or_nan(self.test_returns.iter().map(|&r| r as f64)),
            policy_loss: loss(Term::Policy),
            value_loss: if value_loss.is_nan() { loss(Term::AuxValue) } else { value_loss },
            c_pi: term(Term::CPi),
            c_v: term(Term::CV),
            dynamics_loss: loss(Term::Dynamics),
            entropy: term(Term::Entropy),
            predicted_init_value: mean_or_nan(
                batch.finished.iter().filter_map(|e| e.start_value.map(f64::from)),
            ),
            empirical_init_return: mean_or_nan(
                batch.finished.iter().filter(|e| e.start_value.is_some()).map(|e| e.discounted_return),
            ),
        }
    }

    /// Value predictions of the shared head for every row of `obs`.
    fn shared_values(&self, obs: &[f32], rows: usize) -> Result<Vec<f32>, NetError> {
        let d = self.graphs.obs_dim;
        let enc = self.graphs.graph(Component::Encoder);
        let head = self.graphs.graph(Component::ValueHead);
        let mut out = Vec::with_capacity(rows);
        for start in (0..rows).step_by(FORWARD_CHUNK) {
            let n = FORWARD_CHUNK.min(rows - start);
            let e = enc.forward(self.params.get(Component::Encoder).unwrap(), &obs[start * d..(start + n) * d], n)?;
            let v = head.forward(self.params.get(Component::ValueHead).unwrap(), e.output(), n)?;
            out.extend_from_slice(v.output());
        }
        Ok(out)
    }

    fn policy_logits(&self, obs: &[f32], rows: usize) -> Result<Vec<f32>, NetError> {
        let d = self.graphs.obs_dim;
        let mut out = Vec::with_capacity(rows * self.graphs.num_actions);
        for start in (0..rows).step_by(FORWARD_CHUNK) {
            let n = FORWARD_CHUNK.min(rows - start);
            let o = act_with(&self.graphs, &self.params, Algorithm::Ppo, &obs[start * d..(start + n) * d], n)?;
            out.extend_from_slice(&o.logits);
        }
        Ok(out)
    }

    fn policy_phase(&mut self, batch: &RolloutBatch, bundles: &mut Vec<LossBundle>) -> Result<(), TrainError> {
        let n = batch.len();
        let d = batch.obs_dim;
        let mut advantages = batch.advantages.clone();
        normalize_advantages(&mut advantages);
        let snapshot = match self.plan.policy.c_v {
            Some(_) => self.shared_values(&batch.obs, n)?,
            None => Vec::new(),
        };
        let weights = self.plan.policy.clone();
        let build = |idx: &[usize]| Minibatch {
            rows: idx.len(),
            obs: gather(&batch.obs, d, idx),
            actions: gather(&batch.actions, 1, idx),
            old_log_probs: gather(&batch.log_probs, 1, idx),
            advantages: gather(&advantages, 1, idx),
            targets: gather(&batch.targets, 1, idx),
            separate_targets: gather(&batch.targets, 1, idx),
            value_snapshot: if snapshot.is_empty() { Vec::new() } else { gather(&snapshot, 1, idx) },
            ..Minibatch::default()
        };
        let shared_value_active = weights.shared_value.is_some_and(|c| c != 0.0);
        for epoch in 0..self.schedule.e_pi {
            for (j, idx) in minibatches(n, self.schedule.minibatches, &mut self.streams.minibatch)
                .into_iter()
                .enumerate()
            {
                let out = self.apply(&build(&idx), &weights)?;
                if epoch == 0 && j == 0 {
                    self.probe(Phase::Policy, &out, Term::CV);
                }
                if shared_value_active {
                    self.counters.last_mut().unwrap().shared_value_updates_policy += 1;
                }
                bundles.push(out.bundle);
            }
            let c = self.counters.last_mut().unwrap();
            c.policy_epochs += 1;
            c.shared_value_epochs_policy += shared_value_active as usize;
            c.separate_value_epochs_policy += weights.separate_value.is_some_and(|c| c != 0.0) as usize;
        }
        if let Some(w) = self.plan.separate_value.clone() {
            for _ in 0..self.schedule.e_v {
                for idx in minibatches(n, self.schedule.minibatches, &mut self.streams.minibatch) {
                    let out = self.apply(&build(&idx), &w)?;
                    bundles.push(out.bundle);
                }
                self.counters.last_mut().unwrap().separate_value_epochs_policy += 1;
            }
        }
        Ok(())
    }

    fn aux_phase(&mut self, bundles: &mut Vec<LossBundle>) -> Result<(), TrainError> {
        let weights = self.plan.auxiliary.clone().expect("phasic algorithm");
        let n = self.aux.len();
        let d = self.aux.obs_dim;
        let k = self.aux.num_actions;
        self.aux.snapshot_logits = self.policy_logits(&self.aux.obs, n)?;
        let shared_targets = if self.plan.shared_uses_alt_targets {
            std::mem::take(&mut self.aux.alt_targets)
        } else {
            self.aux.targets.clone()
        };
        let m = self.schedule.aux_minibatches * self.aux.rollouts();
        let shared_value_active = weights.shared_value.is_some_and(|c| c != 0.0);
        let separate_active = weights.separate_value.is_some_and(|c| c != 0.0);
        self.counters.last_mut().unwrap().aux_buffer_states = n;
        let result = (|| {
            for epoch in 0..self.schedule.e_aux {
                let mut states = 0;
                for (j, idx) in minibatches(n, m, &mut self.streams.minibatch).into_iter().enumerate() {
                    let rows = idx.len();
                    let actions = gather(&self.aux.actions, 1, &idx);
                    let (negative_state_index, negative_actions) = match weights.dynamics {
                        Some(_) => (
                            negative_state_indices(rows, &mut self.streams.negatives)?,
                            negative_actions(&actions, k, &mut self.streams.negatives)?,
                        ),
                        None => (Vec::new(), Vec::new()),
                    };
                    let mb = Minibatch {
                        rows,
                        obs: gather(&self.aux.obs, d, &idx),
                        next_obs: if weights.dynamics.is_some() {
                            gather(&self.aux.next_obs, d, &idx)
                        } else {
                            Vec::new()
                        },
                        actions,
                        targets: gather(&shared_targets, 1, &idx),
                        separate_targets: gather(&self.aux.targets, 1, &idx),
                        logit_snapshot: gather(&self.aux.snapshot_logits, k, &idx),
                        negative_state_index,
                        negative_actions,
                        ..Minibatch::default()
                    };
                    let out = self.apply(&mb, &weights)?;
                    if epoch == 0 && j == 0 {
                        self.probe(Phase::Auxiliary, &out, Term::CPi);
                    }
                    states += rows;
                    bundles.push(out.bundle);
                }
                let c = self.counters.last_mut().unwrap();
                if shared_value_active {
                    c.shared_value_epochs_aux += 1;
                    c.aux_epoch_states.push(states);
                }
                c.separate_value_epochs_aux += separate_active as usize;
            }
            Ok(())
        })();
        if self.plan.shared_uses_alt_targets {
            self.aux.alt_targets = shared_targets;
        }
        result
    }

    fn probe(&mut self, phase: Phase, out: &LossOutput<f32>, term: Term) {
        if let (Some(value), Some(grad_max)) = (out.bundle.objective(term), out.term_grad_max(term)) {
            self.probes.push(RegularizerProbe {
                rollout: self.rollouts_done,
                phase,
                term,
                value,
                grad_max,
            });
        }
    }

    /// One optimizer step: loss, per-group norm clipping, Adam on every
    /// component that received a gradient.
    fn apply(&mut self, mb: &Minibatch<f32>, w: &LossWeights) -> Result<LossOutput<f32>, TrainError> {
        let mut out = evaluate_loss(&self.graphs, &self.params, mb, w)?;
        if !out.bundle.is_finite() {
            let bad: Vec<&str> = out
                .bundle
                .terms()
                .filter(|&t| !out.bundle.objective(t).unwrap().is_finite())
                .map(Term::name)
                .collect();
            return Err(self.divergence(format!("non-finite loss terms: {}", bad.join(", "))));
        }
        let max_norm = self.cfg.ppo.max_grad_norm;
        if max_norm > 0.0 {
            for group in [Group::Policy, Group::Value] {
                let sq: f64 = out
                    .grads
                    .iter()
                    .filter(|(c, _)| c.group() == group)
                    .flat_map(|(_, g)| g.entries().iter().flat_map(|e| e.values.iter()))
                    .map(|&x| (x as f64) * (x as f64))
                    .sum();
                let norm = sq.sqrt();
                if !norm.is_finite() {
                    return Err(self.divergence("non-finite gradient"));
                }
                if norm > max_norm {
                    let scale = (max_norm / (norm + 1e-6)) as f32;
                    for (c, g) in out.grads.iter_mut() {
                        if c.group() == group {
                            g.scale(scale);
                        }
                    }
                }
            }
        }
        for (c, g) in out.grads.iter() {
            let p = self.params.get_mut(c).expect("gradient for an existing component");
            self.adam.get_mut(c).expect("optimizer per component").step(p, g)?;
        }
        Ok(out)
    }

    fn measure_stiffness(&mut self, batch: &RolloutBatch) -> Result<(), TrainError> {
        let k = self.cfg.run.stiffness_batch.min(batch.len());
        let idx = index::sample(&mut self.streams.stiffness, batch.len(), k).into_vec();
        let states = gather(&batch.obs, batch.obs_dim, &idx);
        let targets = gather(&batch.targets, 1, &idx);
        let (graph, params) = self.value_network()?;
        if let Some(s) = value_stiffness(&params, &graph, &states, &targets)? {
            self.stiffness.push(StiffnessSample {
                num_steps: self.num_steps() + self.cfg.rollout_size(),
                stiffness: s,
            });
        }
        Ok(())
    }

    /// Serializes everything needed to continue training bit-for-bit.
    pub fn save_checkpoint(&self) -> Vec<u8> {
        let mut tensors = self.params.merged();
        for (_, a) in self.adam.iter() {
            for (prefix, set) in [("adam_m/", &a.m), ("adam_v/", &a.v)] {
                for e in set.entries() {
                    tensors
                        .push(format!("{prefix}{}", e.name), e.shape.clone(), e.values.clone())
                        .expect("unique optimizer entry names");
                }
            }
        }
        let d = self.aux.obs_dim;
        let n = self.aux.len();
        for (name, values, width) in [
            ("aux/obs", &self.aux.obs, d),
            ("aux/next_obs", &self.aux.next_obs, d),
            ("aux/targets", &self.aux.targets, 1),
            ("aux/alt_targets", &self.aux.alt_targets, 1),
        ] {
            let rows = values.len().checked_div(width).unwrap_or(0);
            debug_assert!(rows == n || values.is_empty());
            tensors
                .push(name, vec![rows, width], values.clone())
                .expect("unique buffer entry names");
        }
        let state = SavedState {
            version: STATE_VERSION,
            config: self.cfg.to_text(),
            config_hash: self.cfg.hash(),
            rollouts_done: self.rollouts_done,
            adam_steps: self.adam.iter().map(|(c, a)| (c, a.t)).collect(),
            train_env: self.train_env.clone(),
            test_env: self.test_env.clone(),
            normalizer: self.normalizer.clone(),
            streams: self.streams.clone(),
            aux_actions: self.aux.actions.clone(),
            aux_rollouts: self.aux.rollouts(),
            train_returns: self.train_returns.clone(),
            test_returns: self.test_returns.clone(),
            counters: self.counters.clone(),
            probes: self.probes.clone(),
            stiffness: self.stiffness.clone(),
        };
        encode_checkpoint(&Checkpoint {
            params: tensors,
            state: serde_json::to_vec(&state).expect("trainer state serializes"),
        })
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self, TrainError> {
        let ckpt = decode_checkpoint(bytes)?;
        let state: SavedState =
            serde_json::from_slice(&ckpt.state).map_err(|e| TrainError::State(e.to_string()))?;
        if state.version != STATE_VERSION {
            return Err(TrainError::State(format!(
                "state version {} is not supported (expected {STATE_VERSION})",
                state.version
            )));
        }
        let cfg = TrainConfig::parse(&state.config)?;
        if cfg.hash() != state.config_hash {
            return Err(TrainError::State("config hash does not match its text".into()));
        }
        let mut t = Trainer::new(cfg)?;
        let tensor = |name: &str| {
            ckpt.params
                .get(name)
                .map(|e| e.values.clone())
                .ok_or_else(|| TrainError::State(format!("missing tensor `{name}`")))
        };
        let fill = |set: &mut ParamSet<f32>, prefix: &str| -> Result<(), TrainError> {
            for e in set.entries_mut() {
                let v = tensor(&format!("{prefix}{}", e.name))?;
                if v.len() != e.values.len() {
                    return Err(TrainError::State(format!("tensor `{prefix}{}` has the wrong size", e.name)));
                }
                e.values = v;
            }
            Ok(())
        };
        for (_, p) in t.params.iter_mut() {
            fill(p, "")?;
        }
        for (c, a) in t.adam.iter_mut() {
            fill(&mut a.m, "adam_m/")?;
            fill(&mut a.v, "adam_v/")?;
            a.t = state
                .adam_steps
                .iter()
                .find(|(sc, _)| *sc == c)
                .map(|(_, s)| *s)
                .ok_or_else(|| TrainError::State(format!("missing optimizer step for {c:?}")))?;
        }
        t.aux.obs = tensor("aux/obs")?;
        t.aux.next_obs = tensor("aux/next_obs")?;
        t.aux.targets = tensor("aux/targets")?;
        t.aux.alt_targets = tensor("aux/alt_targets")?;
        t.aux.actions = state.aux_actions;
        t.aux.set_rollouts(state.aux_rollouts);
        t.rollouts_done = state.rollouts_done;
        t.train_env = state.train_env;
        t.test_env = state.test_env;
        t.normalizer = state.normalizer;
        t.streams = state.streams;
        t.train_returns = state.train_returns;
        t.test_returns = state.test_returns;
        t.counters = state.counters;
        t.probes = state.probes;
        t.stiffness = state.stiffness;
        Ok(t)
    }
}
