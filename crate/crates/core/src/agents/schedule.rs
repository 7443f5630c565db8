use serde::{Deserialize, Serialize};

use crate::harness::config::TrainConfig;
use crate::objectives::{DynamicsKind, Term};

use super::algorithm::{Algorithm, Topology};
use super::loss::LossWeights;

/// Epoch and minibatch counts of one phase cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSchedule {
    /// Policy iterations (rollouts) per cycle.
    pub n_pi: usize,
    /// Policy epochs per rollout.
    pub e_pi: usize,
    /// Separate value network epochs per rollout.
    pub e_v: usize,
    /// Auxiliary epochs per cycle.
    pub e_aux: usize,
    /// Minibatches per policy-phase epoch.
    pub minibatches: usize,
    /// Auxiliary minibatches per epoch and stored rollout.
    pub aux_minibatches: usize,
}

impl PhaseSchedule {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        let phasic = cfg.run.algorithm.is_phasic();
        Self {
            n_pi: cfg.phasic.n_pi,
            e_pi: if phasic { cfg.phasic.e_pi } else { cfg.ppo.epochs },
            e_v: cfg.phasic.e_v,
            e_aux: if phasic { cfg.phasic.e_aux } else { 0 },
            minibatches: cfg.ppo.minibatches,
            aux_minibatches: cfg.phasic.aux_minibatches,
        }
    }
}

/// Coefficients of every update an algorithm performs.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdatePlan {
    /// Policy-phase update on the shared trunk.
    pub policy: LossWeights,
    /// Policy-phase update of the separate value network, if any.
    pub separate_value: Option<LossWeights>,
    /// Auxiliary-phase update; `None` for PPO.
    pub auxiliary: Option<LossWeights>,
    /// Shared value head regresses on the second target stream.
    pub shared_uses_alt_targets: bool,
}

impl UpdatePlan {
    pub fn new(cfg: &TrainConfig) -> Self {
        let alg = cfg.run.algorithm;
        let reg = &cfg.regularization;
        let dual = alg.topology() == Topology::Dual;
        let shared_term = if dual { Term::AuxValue } else { Term::Value };
        let alpha = if alg == Algorithm::PpgAr { reg.alpha } else { 0.0 };
        let base = LossWeights {
            policy: Some(1.0),
            clip: cfg.ppo.clip_eps,
            entropy: Some(cfg.ppo.entropy_coef),
            ..LossWeights::default()
        };
        let policy = match alg {
            Algorithm::Ppo => LossWeights {
                shared_value: Some(cfg.ppo.value_coef),
                shared_value_term: Some(Term::Value),
                ..base
            },
            Algorithm::Ppg | Algorithm::PpgDr | Algorithm::PpgAr => base,
            Algorithm::SeparateDcpg => LossWeights {
                c_v: Some(reg.beta_v),
                separate_value: Some(1.0),
                ..base
            },
            _ => LossWeights {
                c_v: Some(reg.beta_v),
                ..base
            },
        };
        let separate_value = alg.is_ppg().then(|| LossWeights {
            separate_value: Some(1.0),
            alpha,
            ..LossWeights::default()
        });
        let auxiliary = alg.is_phasic().then(|| {
            let kind = alg.dynamics();
            LossWeights {
                c_pi: Some(cfg.phasic.beta_pi),
                shared_value: Some(1.0),
                shared_value_term: Some(shared_term),
                separate_value: dual.then_some(1.0),
                alpha,
                dynamics: kind.map(|_| reg.beta_f),
                dynamics_kind: kind,
                eta: match kind {
                    Some(DynamicsKind::ForwardInverse) => reg.eta_fi,
                    _ => reg.eta,
                },
                ..LossWeights::default()
            }
        });
        Self {
            policy,
            separate_value,
            auxiliary,
            shared_uses_alt_targets: alg == Algorithm::SeparateDcpg,
        }
    }
}
