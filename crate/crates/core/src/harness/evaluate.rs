use serde::{Deserialize, Serialize};

use crate::agents::{TrainError, Trainer};
use crate::diffnet::sample;
use crate::envsuite::{Resample, VectorEnv};
use crate::rollout::RolloutError;

use super::seeding;

pub const DEFAULT_EVAL_EPISODES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (expected train or test)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub split: Split,
    pub episodes: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub returns: Vec<f64>,
}

/// Plays `episodes` episodes on levels drawn uniformly from `split`,
/// sampling actions from the policy as during training.
pub fn evaluate(trainer: &Trainer, split: Split, episodes: usize, seed: u64) -> Result<EvalResult, TrainError> {
    if episodes == 0 {
        return Err(TrainError::State("evaluation needs at least one episode".into()));
    }
    let cfg = trainer.config();
    let levels = match split {
        Split::Train => cfg.level_split().train,
        Split::Test => cfg.level_split().test,
    };
    let name = format!("evaluate/{split:?}");
    let mut venv = VectorEnv::new(
        cfg.env.family,
        cfg.env_params(),
        levels,
        1,
        Resample::Uniform,
        seeding::stream(seed, &format!("{name}/env")),
        cfg.ppo.gamma,
    )?;
    let mut rng = seeding::stream(seed, &format!("{name}/policy"));
    let mut returns = Vec::with_capacity(episodes);
    while returns.len() < episodes {
        let out = trainer.act(&venv.observations(), 1)?;
        let action = sample(&out.logits, &mut rng).map_err(RolloutError::from)?;
        if let Some(ep) = venv.step(&[action])?.finished.first() {
            returns.push(ep.episode_return as f64);
        }
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok(EvalResult {
        split,
        episodes,
        mean,
        std: var.sqrt(),
        returns,
    })
}
