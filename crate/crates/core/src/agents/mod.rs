//! Agents: network topologies, per-update losses, and the phase-scheduled trainer.

mod algorithm;
mod loss;
mod nets;
mod schedule;
mod trainer;

pub use algorithm::{Algorithm, Topology};
pub use loss::{evaluate_loss, LossError, LossOutput, LossWeights, Minibatch};
pub use nets::{Component, Group, NetGraphs, NetParams, PerComponent};
pub use schedule::{PhaseSchedule, UpdatePlan};
pub use trainer::{
    act_with, separate_value_drives_advantages, CycleCounters, MetricsRow, Phase,
    RegularizerProbe, StiffnessSample, TrainError, Trainer, EPISODE_WINDOW, STATE_VERSION,
};
