//! Fog-network load balancing with tabular Q-learning.
//!
//! A centralized controller sees the requesting node, its batch size and all
//! queue lengths, and decides how many tasks to offload and to which
//! neighbor. The reward trades task utility against end-to-end delay and the
//! probability of overloading a queue.
//!
//! - [`model`]: node, channel and timing formulas
//! - [`mdp`]: state/action spaces, reward and transition law
//! - [`solvers`]: Q-learning, value iteration and heuristic baselines
//! - [`harness`]: scenarios, evaluation runs, sweeps and reports
//! - [`config`]: TOML run configuration

pub mod config;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod model;
pub mod solvers;

pub use config::{RunConfig, ScenarioConfig, SweepVariable};
pub use error::{ConfigError, HarnessError, ModelError, SolverError};
pub use harness::{MetricsReport, Scenario, SweepPlan};
pub use mdp::{OffloadAction, OffloadMdp, RewardBreakdown, RewardWeights, SystemState};
pub use solvers::{LearningConfig, Policy, PolicyKind, QTable};
