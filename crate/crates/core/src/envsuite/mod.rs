//! Level-seeded environment families.
//!
//! `PaletteGrid` keeps dynamics fixed across levels while the rendering of
//! every cell type is drawn from the level seed, so a policy can overfit to
//! the colors of its training levels. `ChainWalk` is a tiny deterministic
//! chain whose values are known in closed form.

mod chain_walk;
mod palette_grid;
mod split;
mod vector_env;

use serde::{Deserialize, Serialize};

pub use chain_walk::ChainWalk;
pub use palette_grid::{Layout, PaletteGrid, CellType, PALETTE_DIM};
pub use split::{LevelSplit, SplitError};
pub use vector_env::{EpisodeSummary, Resample, VectorEnv, VectorStep};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    PaletteGrid,
    ChainWalk,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::PaletteGrid => "palette_grid",
            Family::ChainWalk => "chain_walk",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "palette_grid" | "PaletteGrid" => Ok(Family::PaletteGrid),
            "chain_walk" | "ChainWalk" => Ok(Family::ChainWalk),
            other => Err(format!("unknown environment family `{other}`")),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LevelSpec {
    pub family: Family,
    pub level_seed: u64,
}

/// Family-wide settings shared by every level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub grid_size: usize,
    pub layout_pool: usize,
    pub time_limit: u32,
    pub goal_reward: f32,
    pub chain_length: usize,
    pub chain_time_limit: u32,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            grid_size: 7,
            layout_pool: 8,
            time_limit: 64,
            goal_reward: 10.0,
            chain_length: 8,
            chain_time_limit: 16,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("step called on a finished episode; reset first")]
    StepAfterDone,
    #[error("action {action} out of range (0..{actions})")]
    InvalidAction { action: usize, actions: usize },
    #[error("vector env needs at least one level and one environment")]
    Empty,
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
}

/// Result of one environment transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub reward: f32,
    pub done: bool,
    /// Episode ended by the time limit rather than by reaching a terminal state.
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EnvInstance {
    Palette(PaletteGrid),
    Chain(ChainWalk),
}

/// Builds the MDP instance for `spec`. Construction is a pure function of
/// the spec and the family parameters.
pub fn make_env(spec: LevelSpec, params: &EnvParams) -> EnvInstance {
    match spec.family {
        Family::PaletteGrid => EnvInstance::Palette(PaletteGrid::new(spec.level_seed, params)),
        Family::ChainWalk => EnvInstance::Chain(ChainWalk::new(
            spec.level_seed,
            params.chain_length,
            params.chain_time_limit,
        )),
    }
}

/// Observation width for a family under `params`.
pub fn obs_dim(family: Family, params: &EnvParams) -> usize {
    match family {
        Family::PaletteGrid => PaletteGrid::obs_dim_for(params.grid_size),
        Family::ChainWalk => params.chain_length + 1,
    }
}

pub fn num_actions(family: Family) -> usize {
    match family {
        Family::PaletteGrid => PaletteGrid::NUM_ACTIONS,
        Family::ChainWalk => ChainWalk::NUM_ACTIONS,
    }
}

impl EnvInstance {
    pub fn obs_dim(&self) -> usize {
        match self {
            EnvInstance::Palette(e) => e.obs_dim(),
            EnvInstance::Chain(e) => e.obs_dim(),
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            EnvInstance::Palette(_) => PaletteGrid::NUM_ACTIONS,
            EnvInstance::Chain(_) => ChainWalk::NUM_ACTIONS,
        }
    }

    pub fn level_seed(&self) -> u64 {
        match self {
            EnvInstance::Palette(e) => e.level_seed(),
            EnvInstance::Chain(e) => e.level_seed(),
        }
    }

    pub fn reset(&mut self) {
        match self {
            EnvInstance::Palette(e) => e.reset(),
            EnvInstance::Chain(e) => e.reset(),
        }
    }

    pub fn is_done(&self) -> bool {
        match self {
            EnvInstance::Palette(e) => e.is_done(),
            EnvInstance::Chain(e) => e.is_done(),
        }
    }

    pub fn episode_steps(&self) -> u32 {
        match self {
            EnvInstance::Palette(e) => e.steps(),
            EnvInstance::Chain(e) => e.steps(),
        }
    }

    pub fn write_observation(&self, out: &mut [f32]) {
        match self {
            EnvInstance::Palette(e) => e.write_observation(out),
            EnvInstance::Chain(e) => e.write_observation(out),
        }
    }

    pub fn observation(&self) -> Vec<f32> {
        let mut out = vec![0.0; self.obs_dim()];
        self.write_observation(&mut out);
        out
    }

    pub fn step(&mut self, action: usize) -> Result<Step, EnvError> {
        match self {
            EnvInstance::Palette(e) => e.step(action),
            EnvInstance::Chain(e) => e.step(action),
        }
    }
}
