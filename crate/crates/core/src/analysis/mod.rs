//! Diagnostics: gradient stiffness, initial-state value bias, OOD-action
//! counts, and score aggregation.

mod csv;
mod ood;
mod scores;
mod stiffness;
mod sweep;
mod value_bias;

pub use csv::{num, scores_csv, stiffness_csv, value_bias_csv, SCORES_HEADER};
pub use ood::{discriminator_probabilities, ood_action_count};
pub use scores::{
    interquartile_mean, probability_of_improvement, score_aggregate, RunScore, ScoreError,
    ScoreRow, ScoreTable, BASELINE,
};
pub use stiffness::{mean_pairwise_stiffness, stiffness, value_stiffness, PairwiseStiffness};
pub use sweep::{
    stiffness_sweep, StiffnessReport, DESK_LEVEL_COUNTS, DESK_STIFFNESS_BATCH, PAPER_LEVEL_COUNTS,
};
pub use value_bias::{probe_episodes, value_bias_probe, ValueBiasPoint, ValueBiasSeries};
