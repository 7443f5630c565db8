use serde::{Deserialize, Serialize};

use super::{EnvError, Step};

/// Deterministic chain `0..=length`. Action 0 moves left (clamped at 0),
/// action 1 moves right; reaching `length` pays 1 and ends the episode.
///
/// The level seed is recorded but has no effect: every level is the same MDP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainWalk {
    level_seed: u64,
    length: usize,
    position: usize,
    steps: u32,
    done: bool,
    time_limit: u32,
}

impl ChainWalk {
    pub const NUM_ACTIONS: usize = 2;

    pub fn new(level_seed: u64, length: usize, time_limit: u32) -> Self {
        assert!(length >= 1);
        Self {
            level_seed,
            length,
            position: 0,
            steps: 0,
            done: false,
            time_limit,
        }
    }

    /// Discounted value of the start state under the always-right policy.
    pub fn always_right_value(length: usize, gamma: f64) -> f64 {
        gamma.powi(length as i32 - 1)
    }

    pub fn level_seed(&self) -> u64 {
        self.level_seed
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn obs_dim(&self) -> usize {
        self.length + 1
    }

    pub fn reset(&mut self) {
        self.position = 0;
        self.steps = 0;
        self.done = false;
    }

    pub fn write_observation(&self, out: &mut [f32]) {
        out.fill(0.0);
        out[self.position] = 1.0;
    }

    pub fn step(&mut self, action: usize) -> Result<Step, EnvError> {
        if self.done {
            return Err(EnvError::StepAfterDone);
        }
        match action {
            0 => self.position = self.position.saturating_sub(1),
            1 => self.position += 1,
            _ => {
                return Err(EnvError::InvalidAction {
                    action,
                    actions: Self::NUM_ACTIONS,
                })
            }
        }
        self.steps += 1;
        if self.position == self.length {
            self.done = true;
            return Ok(Step {
                reward: 1.0,
                done: true,
                truncated: false,
            });
        }
        let truncated = self.steps >= self.time_limit;
        self.done = truncated;
        Ok(Step {
            reward: 0.0,
            done: truncated,
            truncated,
        })
    }
}
