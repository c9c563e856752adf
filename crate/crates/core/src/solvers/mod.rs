//! Decision policies: Q-learning, exact value iteration and heuristics.

pub mod baselines;
pub mod qlearning;
pub mod qtable;
pub mod value_iteration;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use baselines::{baseline_action, BaselineKind};
pub use qlearning::{epsilon_greedy, q_update, train, train_with, LearningConfig, TraceRecord, TrainOutcome};
pub use qtable::{QEntry, QTable};
pub use value_iteration::{bellman_residual, value_iteration, Enumerated, FiniteMdp, ValueSolution};

use crate::mdp::{OffloadAction, OffloadMdp, StateKey, SystemState};

/// Policy identifier without payload, as used in configs and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Qlearning,
    Random,
    LeastQueue,
    Nearest,
    ValueIteration,
}

impl PolicyKind {
    /// The learned policy and the three heuristics.
    pub const STANDARD: [PolicyKind; 4] = [Self::Qlearning, Self::Random, Self::LeastQueue, Self::Nearest];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Qlearning => "qlearning",
            Self::Random => "random",
            Self::LeastQueue => "least-queue",
            Self::Nearest => "nearest",
            Self::ValueIteration => "value-iteration",
        }
    }

    pub fn baseline(&self) -> Option<BaselineKind> {
        match self {
            Self::Random => Some(BaselineKind::Random),
            Self::LeastQueue => Some(BaselineKind::LeastQueue),
            Self::Nearest => Some(BaselineKind::Nearest),
            _ => None,
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Self::Qlearning,
            Self::Random,
            Self::LeastQueue,
            Self::Nearest,
            Self::ValueIteration,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| format!("unknown policy `{s}`"))
    }
}

/// A fixed decision rule evaluated without learning.
#[derive(Debug, Clone)]
pub enum Policy {
    QLearning(QTable),
    Baseline(BaselineKind),
    ValueIteration(HashMap<StateKey, OffloadAction>),
}

impl Policy {
    pub fn kind(&self) -> PolicyKind {
        match self {
            Self::QLearning(_) => PolicyKind::Qlearning,
            Self::Baseline(BaselineKind::Random) => PolicyKind::Random,
            Self::Baseline(BaselineKind::LeastQueue) => PolicyKind::LeastQueue,
            Self::Baseline(BaselineKind::Nearest) => PolicyKind::Nearest,
            Self::ValueIteration(_) => PolicyKind::ValueIteration,
        }
    }

    pub fn from_solution(mdp: &OffloadMdp, solution: &ValueSolution<SystemState, OffloadAction>) -> Self {
        Self::ValueIteration(
            solution
                .states
                .iter()
                .zip(&solution.policy)
                .map(|(s, a)| (mdp.state_key(s), *a))
                .collect(),
        )
    }

    /// Picks an admissible action for `s`.
    pub fn choose<R: Rng + ?Sized>(&self, mdp: &OffloadMdp, s: &SystemState, rng: &mut R) -> OffloadAction {
        match self {
            Self::QLearning(table) => table.greedy(mdp.state_key(s), &mdp.admissible_actions(s)),
            Self::Baseline(kind) => baseline_action(*kind, mdp, s, rng),
            Self::ValueIteration(map) => map.get(&mdp.state_key(s)).copied().unwrap_or(OffloadAction::Local),
        }
    }
}
