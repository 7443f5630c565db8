use super::RolloutBatch;

/// Transitions accumulated over the policy phases of one cycle.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AuxBuffer {
    pub obs_dim: usize,
    pub num_actions: usize,
    pub obs: Vec<f32>,
    pub next_obs: Vec<f32>,
    pub actions: Vec<usize>,
    pub targets: Vec<f32>,
    pub alt_targets: Vec<f32>,
    /// Policy logits taken right before the auxiliary phase.
    pub snapshot_logits: Vec<f32>,
    rollouts: usize,
}

impl AuxBuffer {
    pub fn new(obs_dim: usize, num_actions: usize) -> Self {
        Self {
            obs_dim,
            num_actions,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Number of rollouts added since the last clear.
    pub fn rollouts(&self) -> usize {
        self.rollouts
    }

    /// Restores the rollout count of a buffer rebuilt from saved arrays.
    pub fn set_rollouts(&mut self, rollouts: usize) {
        self.rollouts = rollouts;
    }

    pub fn clear(&mut self) {
        self.obs.clear();
        self.next_obs.clear();
        self.actions.clear();
        self.targets.clear();
        self.alt_targets.clear();
        self.snapshot_logits.clear();
        self.rollouts = 0;
    }

    /// Appends every transition of `batch`. Targets must already be computed.
    pub fn push(&mut self, batch: &RolloutBatch) {
        assert_eq!(batch.obs_dim, self.obs_dim);
        assert_eq!(batch.targets.len(), batch.len(), "targets not computed");
        self.obs.extend_from_slice(&batch.obs);
        self.next_obs.extend_from_slice(&batch.next_obs);
        self.actions.extend_from_slice(&batch.actions);
        self.targets.extend_from_slice(&batch.targets);
        if let Some(alt) = &batch.alt_targets {
            self.alt_targets.extend_from_slice(alt);
        }
        self.rollouts += 1;
    }

    pub fn obs_row(&self, i: usize) -> &[f32] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }
}
