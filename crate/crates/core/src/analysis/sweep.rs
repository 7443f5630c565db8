use serde::{Deserialize, Serialize};

use crate::agents::{Algorithm, TrainError, Trainer};
use crate::harness::config::{ConfigError, TrainConfig};

/// Training-level counts of the full sweep.
pub const PAPER_LEVEL_COUNTS: [usize; 8] = [1, 2, 5, 10, 20, 50, 100, 200];
/// Desk-scale subset.
pub const DESK_LEVEL_COUNTS: [usize; 4] = [1, 5, 20, 50];
/// States per measurement when the config leaves it unset.
pub const DESK_STIFFNESS_BATCH: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StiffnessReport {
    pub n_train_levels: usize,
    /// Mean pairwise stiffness of each measurement during training.
    pub samples: Vec<f64>,
    /// Average over the measurements (NaN when none were taken).
    pub mean: f64,
}

impl StiffnessReport {
    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }
}

/// Trains `algorithm` once per level count and averages the value-network
/// stiffness measured along the way.
pub fn stiffness_sweep(
    base: &TrainConfig,
    algorithm: Algorithm,
    level_counts: &[usize],
) -> Result<Vec<StiffnessReport>, TrainError> {
    if level_counts.is_empty() || level_counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(TrainError::Config(ConfigError::Invalid {
            field: "level_counts".into(),
            message: "must be non-empty and strictly ascending".into(),
        }));
    }
    let mut reports = Vec::with_capacity(level_counts.len());
    for &n in level_counts {
        let mut cfg = base.clone();
        cfg.run.algorithm = algorithm;
        cfg.env.n_train_levels = n;
        if cfg.run.stiffness_batch == 0 {
            cfg.run.stiffness_batch = DESK_STIFFNESS_BATCH;
        }
        let mut trainer = Trainer::new(cfg)?;
        while !trainer.is_finished() {
            trainer.step_rollout()?;
        }
        let samples: Vec<f64> = trainer.stiffness_samples().iter().map(|s| s.stiffness.mean).collect();
        let mean = if samples.is_empty() {
            f64::NAN
        } else {
            samples.iter().sum::<f64>() / samples.len() as f64
        };
        reports.push(StiffnessReport {
            n_train_levels: n,
            samples,
            mean,
        });
    }
    Ok(reports)
}
