use serde::{Deserialize, Serialize};

/// Running mean and variance merged batch by batch (parallel Welford).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningMeanStd {
    pub mean: f64,
    pub var: f64,
    pub count: f64,
}

impl Default for RunningMeanStd {
    fn default() -> Self {
        Self {
            mean: 0.0,
            var: 1.0,
            count: 1e-4,
        }
    }
}

impl RunningMeanStd {
    pub fn update(&mut self, batch: &[f64]) {
        if batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        let mean = batch.iter().sum::<f64>() / n;
        let var = batch.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let delta = mean - self.mean;
        let total = self.count + n;
        let m2 = self.var * self.count + var * n + delta * delta * self.count * n / total;
        self.mean += delta * n / total;
        self.var = m2 / total;
        self.count = total;
    }

    pub fn std(&self) -> f64 {
        self.var.sqrt()
    }
}

/// Scales rewards by the running standard deviation of a per-environment
/// discounted return accumulator. Never shifts or clips.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardNormalizer {
    gamma: f64,
    returns: Vec<f64>,
    stats: RunningMeanStd,
}

impl RewardNormalizer {
    pub fn new(n_envs: usize, gamma: f64) -> Self {
        Self {
            gamma,
            returns: vec![0.0; n_envs],
            stats: RunningMeanStd::default(),
        }
    }

    /// Divisor currently applied to rewards.
    pub fn scale(&self) -> f64 {
        self.stats.std() + 1e-8
    }

    pub fn stats(&self) -> &RunningMeanStd {
        &self.stats
    }

    /// Normalizes one vector step (one reward per environment).
    pub fn normalize(&mut self, rewards: &[f32], dones: &[bool]) -> Vec<f32> {
        assert_eq!(rewards.len(), self.returns.len());
        assert_eq!(dones.len(), self.returns.len());
        for (acc, &r) in self.returns.iter_mut().zip(rewards) {
            *acc = *acc * self.gamma + r as f64;
        }
        self.stats.update(&self.returns);
        let scale = self.scale();
        for (acc, &d) in self.returns.iter_mut().zip(dones) {
            if d {
                *acc = 0.0;
            }
        }
        rewards.iter().map(|&r| (r as f64 / scale) as f32).collect()
    }
}
