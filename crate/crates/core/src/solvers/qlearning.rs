//! Tabular Q-learning with an annealed ε-greedy behavior policy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::qtable::QTable;
use crate::error::ConfigError;
use crate::mdp::{OffloadAction, OffloadMdp, StateKey};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub max_iterations: u64,
    pub seed: u64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            discount: 0.5,
            epsilon_start: 0.9,
            epsilon_end: 0.7,
            max_iterations: 500_000,
            seed: 0,
        }
    }
}

impl LearningConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let open_unit = |field: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(ConfigError::range(
                    format!("learning.{field}"),
                    format!("must lie in (0, 1), got {v}"),
                ))
            }
        };
        open_unit("learning_rate", self.learning_rate)?;
        open_unit("discount", self.discount)?;
        for (field, v) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::range(
                    format!("learning.{field}"),
                    format!("must lie in [0, 1], got {v}"),
                ));
            }
        }
        if self.epsilon_start < self.epsilon_end {
            return Err(ConfigError::range(
                "learning.epsilon_end",
                format!("must not exceed epsilon_start ({})", self.epsilon_start),
            ));
        }
        if self.max_iterations == 0 {
            return Err(ConfigError::range("learning.max_iterations", "must be positive"));
        }
        if self.max_iterations > i64::MAX as u64 || self.seed > i64::MAX as u64 {
            return Err(ConfigError::range(
                "learning.seed/max_iterations",
                "must not exceed 2^63 - 1",
            ));
        }
        Ok(())
    }

    /// Exploration probability at `iteration`, linear from start to end.
    pub fn epsilon_at(&self, iteration: u64) -> f64 {
        if self.max_iterations <= 1 {
            return self.epsilon_start;
        }
        let frac = iteration.min(self.max_iterations - 1) as f64 / (self.max_iterations - 1) as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// One learning step: `Q(s,a) <- (1-α)Q(s,a) + α(r + γ·next_best)`.
/// Returns the new estimate.
pub fn q_update(
    table: &mut QTable,
    state: StateKey,
    action: OffloadAction,
    reward: f64,
    next_best: f64,
    cfg: &LearningConfig,
) -> f64 {
    let old = table.get(state, &action);
    let value = (1.0 - cfg.learning_rate) * old + cfg.learning_rate * (reward + cfg.discount * next_best);
    table.record(state, action, value);
    value
}

/// Greedy with probability `1 - epsilon`, otherwise uniform over `actions`.
pub fn epsilon_greedy<R: Rng + ?Sized>(
    table: &QTable,
    state: StateKey,
    actions: &[OffloadAction],
    epsilon: f64,
    rng: &mut R,
) -> OffloadAction {
    if rng.random::<f64>() < epsilon {
        actions[rng.random_range(0..actions.len())]
    } else {
        table.greedy(state, actions)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: u64,
    pub reward: f64,
    pub delay: f64,
    pub overload: f64,
    pub dropped: u32,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub table: QTable,
    pub trace: Vec<TraceRecord>,
}

/// Runs Q-learning from the all-empty start state and returns the table with
/// the per-iteration trace.
pub fn train(mdp: &OffloadMdp, cfg: &LearningConfig) -> TrainOutcome {
    let mut trace = Vec::with_capacity(cfg.max_iterations.min(1 << 24) as usize);
    let table = train_with(mdp, cfg, |r| trace.push(*r));
    TrainOutcome { table, trace }
}

/// Same as [`train`] but streams trace records to `observe`.
pub fn train_with<F: FnMut(&TraceRecord)>(mdp: &OffloadMdp, cfg: &LearningConfig, mut observe: F) -> QTable {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut table = QTable::new();
    let mut state = mdp.initial_state();
    let mut key = mdp.state_key(&state);
    let mut actions = mdp.admissible_actions(&state);
    for iteration in 0..cfg.max_iterations {
        let action = epsilon_greedy(&table, key, &actions, cfg.epsilon_at(iteration), &mut rng);
        let step = mdp.step(&state, &action, &mut rng);
        let next_key = mdp.state_key(&step.next);
        let next_actions = mdp.admissible_actions(&step.next);
        let next_best = table.max_value(next_key, &next_actions);
        q_update(&mut table, key, action, step.reward.total, next_best, cfg);
        observe(&TraceRecord {
            iteration,
            reward: step.reward.total,
            delay: step.reward.delay,
            overload: step.reward.overload,
            dropped: step.placement.dropped,
        });
        state = step.next;
        key = next_key;
        actions = next_actions;
    }
    table
}
