//! Run configuration: a TOML document whose every field has a default.
//!
//! An empty document resolves to the reference parameter set: 5 nodes in a
//! 100 m × 100 m area, queues of 10 tasks, 500 MB tasks of 200·10⁶
//! instructions at 5 CPI, 2 MHz links with path loss (10⁻³, 4), 20 dBm
//! transmitters, weights (χ_d, χ_o) = (1, 150), r_u = 10, α = γ = 0.5 and
//! ε annealed from 0.9 to 0.7.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::mdp::RewardWeights;
use crate::solvers::{LearningConfig, PolicyKind};

/// Environment variable that overrides `experiment.output_dir`.
pub const OUTPUT_DIR_ENV: &str = "FOGQ_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    /// Mean task arrival rate λ of every node.
    Arrival,
    /// Mean service rate μ̄ of every node.
    Service,
}

impl SweepVariable {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Arrival => "arrival",
            Self::Service => "service",
        }
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepVariable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "arrival" | "arrival_rate" | "lambda" => Ok(Self::Arrival),
            "service" | "service_rate" | "mu" => Ok(Self::Service),
            other => Err(format!(
                "unknown sweep variable `{other}` (expected `arrival` or `service`)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub nodes: usize,
    pub queue_capacity: u32,
    pub max_batch: u32,
    /// Mean arrival rate of every node, tasks per slot.
    pub arrival_rate: f64,
    /// Mean service rate of every node, tasks per slot.
    pub service_rate: f64,
    /// Per-node arrival rates; overrides `arrival_rate` when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arrival_rates: Option<Vec<f64>>,
    /// Per-node service rates; overrides `service_rate` when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub service_rates: Option<Vec<f64>>,
    pub area_width_m: f64,
    pub area_height_m: f64,
    /// Decimal megabytes per task.
    pub data_size_mbytes: f64,
    pub instructions: f64,
    pub cpi: f64,
    pub bandwidth_hz: f64,
    pub path_loss_const: f64,
    pub path_loss_exp: f64,
    pub tx_power_dbm: f64,
    pub noise_psd_dbm_hz: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            nodes: 5,
            queue_capacity: 10,
            max_batch: 10,
            arrival_rate: 5.2,
            service_rate: 1.8,
            arrival_rates: None,
            service_rates: None,
            area_width_m: 100.0,
            area_height_m: 100.0,
            data_size_mbytes: 500.0,
            instructions: 200e6,
            cpi: 5.0,
            bandwidth_hz: 2e6,
            path_loss_const: 1e-3,
            path_loss_exp: 4.0,
            tx_power_dbm: 20.0,
            noise_psd_dbm_hz: -174.0,
        }
    }
}

impl ScenarioConfig {
    pub fn data_size_bits(&self) -> f64 {
        self.data_size_mbytes * 1e6 * 8.0
    }

    pub fn arrival_rates(&self) -> Vec<f64> {
        self.arrival_rates
            .clone()
            .unwrap_or_else(|| vec![self.arrival_rate; self.nodes])
    }

    pub fn service_rates(&self) -> Vec<f64> {
        self.service_rates
            .clone()
            .unwrap_or_else(|| vec![self.service_rate; self.nodes])
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.nodes < 2 {
            return Err(ConfigError::range(
                "scenario.nodes",
                format!("must be at least 2, got {}", self.nodes),
            ));
        }
        if self.queue_capacity < 1 {
            return Err(ConfigError::range("scenario.queue_capacity", "must be at least 1"));
        }
        if self.max_batch < 1 {
            return Err(ConfigError::range("scenario.max_batch", "must be at least 1"));
        }
        for (field, v) in [
            ("arrival_rate", self.arrival_rate),
            ("service_rate", self.service_rate),
            ("area_width_m", self.area_width_m),
            ("area_height_m", self.area_height_m),
            ("data_size_mbytes", self.data_size_mbytes),
            ("instructions", self.instructions),
            ("cpi", self.cpi),
            ("bandwidth_hz", self.bandwidth_hz),
            ("path_loss_const", self.path_loss_const),
            ("path_loss_exp", self.path_loss_exp),
        ] {
            positive(&format!("scenario.{field}"), v)?;
        }
        for (field, v) in [
            ("tx_power_dbm", self.tx_power_dbm),
            ("noise_psd_dbm_hz", self.noise_psd_dbm_hz),
        ] {
            if !v.is_finite() {
                return Err(ConfigError::range(format!("scenario.{field}"), "must be finite"));
            }
        }
        for (field, rates) in [
            ("arrival_rates", &self.arrival_rates),
            ("service_rates", &self.service_rates),
        ] {
            let Some(rates) = rates else { continue };
            if rates.len() != self.nodes {
                return Err(ConfigError::range(
                    format!("scenario.{field}"),
                    format!("expected {} entries (one per node), got {}", self.nodes, rates.len()),
                ));
            }
            for (i, v) in rates.iter().enumerate() {
                positive(&format!("scenario.{field}[{i}]"), *v)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Root seeds; each one reproduces a full run (placement, training, evaluation).
    pub seeds: Vec<u64>,
    pub eval_iterations: u64,
    pub policies: Vec<PolicyKind>,
    pub sweep_variable: SweepVariable,
    pub sweep_values: Vec<f64>,
    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: (1..=10).collect(),
            eval_iterations: 100_000,
            policies: PolicyKind::STANDARD.to_vec(),
            sweep_variable: SweepVariable::Arrival,
            sweep_values: (1..=9).map(f64::from).collect(),
            output_dir: "out".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError::range("experiment.seeds", "must list at least one seed"));
        }
        if self.policies.is_empty() {
            return Err(ConfigError::range(
                "experiment.policies",
                "must list at least one policy",
            ));
        }
        if self.sweep_values.is_empty() {
            return Err(ConfigError::range(
                "experiment.sweep_values",
                "must list at least one value",
            ));
        }
        for (i, v) in self.sweep_values.iter().enumerate() {
            positive(&format!("experiment.sweep_values[{i}]"), *v)?;
        }
        if let Some(i) = self.seeds.iter().position(|&s| s > i64::MAX as u64) {
            return Err(ConfigError::range(
                format!("experiment.seeds[{i}]"),
                "must not exceed 2^63 - 1",
            ));
        }
        if self.output_dir.is_empty() {
            return Err(ConfigError::range("experiment.output_dir", "must not be empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub reward: RewardWeights,
    pub learning: LearningConfig,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    /// Reads and validates `path`; `None` yields the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            Some(p) => Self::from_toml_str(&std::fs::read_to_string(p)?),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario.validate()?;
        if !(self.reward.utility_reward.is_finite() && self.reward.utility_reward > 0.0) {
            return Err(ConfigError::range("reward.utility_reward", "must be finite and > 0"));
        }
        for (field, v) in [
            ("delay_weight", self.reward.delay_weight),
            ("overload_weight", self.reward.overload_weight),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::range(format!("reward.{field}"), "must be finite and >= 0"));
            }
        }
        self.learning.validate()?;
        self.experiment.validate()
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::range(field, format!("must be finite and > 0, got {v}")))
    }
}
