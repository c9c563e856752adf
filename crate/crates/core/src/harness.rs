//! Scenario generation, policy evaluation and rate sweeps.
//!
//! # Seeds
//!
//! Every run is reproducible from one root seed. Component streams are
//! derived as the first output of `ChaCha8Rng::seed_from_u64(root)` switched
//! to stream id [`Stream`]: placement = 1, training = 2, environment = 3,
//! policy = 4. Placement depends only on the root seed, so every policy and
//! every sweep value of one seed sees the same topology.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, ScenarioConfig, SweepVariable};
use crate::error::{HarnessError, ModelError};
use crate::mdp::{OffloadMdp, RewardWeights, StepOutcome};
use crate::model::{Area, ChannelModel, FogNode, Position, TaskProfile};
use crate::solvers::{train_with, LearningConfig, Policy, PolicyKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Placement = 1,
    Training = 2,
    Environment = 3,
    Policy = 4,
}

pub fn derive_seed(root: u64, stream: Stream) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream as u64);
    rng.next_u64()
}

/// A concrete network: placed nodes plus link, task and reward parameters.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub nodes: Vec<FogNode>,
    pub channel: ChannelModel,
    pub tasks: TaskProfile,
    pub weights: RewardWeights,
    pub area: Area,
    pub placement_seed: u64,
    pub max_batch: u32,
}

impl Scenario {
    /// Places `cfg.nodes` nodes uniformly at random in the area.
    pub fn generate(cfg: &ScenarioConfig, weights: RewardWeights, placement_seed: u64) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(placement_seed);
        let area = Area {
            width: cfg.area_width_m,
            height: cfg.area_height_m,
        };
        let mut positions: Vec<Position> = Vec::with_capacity(cfg.nodes);
        while positions.len() < cfg.nodes {
            let p = Position::new(rng.random::<f64>() * area.width, rng.random::<f64>() * area.height);
            if positions.iter().all(|q| q.distance(&p) > 0.0) {
                positions.push(p);
            }
        }
        Self::with_positions(cfg, weights, placement_seed, positions)
    }

    pub fn with_positions(
        cfg: &ScenarioConfig,
        weights: RewardWeights,
        placement_seed: u64,
        positions: Vec<Position>,
    ) -> Result<Self, HarnessError> {
        cfg.validate()?;
        if positions.len() != cfg.nodes {
            return Err(ModelError::InvalidParameter {
                field: "positions",
                reason: format!("expected {} positions, got {}", cfg.nodes, positions.len()),
            }
            .into());
        }
        let area = Area {
            width: cfg.area_width_m,
            height: cfg.area_height_m,
        };
        let tasks = TaskProfile::new(cfg.data_size_bits(), cfg.instructions, cfg.cpi)?;
        let channel = ChannelModel::new(
            cfg.bandwidth_hz,
            cfg.path_loss_const,
            cfg.path_loss_exp,
            cfg.noise_psd_dbm_hz,
        )?;
        let lambdas = cfg.arrival_rates();
        let mus = cfg.service_rates();
        let nodes = positions
            .into_iter()
            .enumerate()
            .map(|(id, position)| {
                if !area.contains(&position) {
                    return Err(ModelError::OutsideArea {
                        id,
                        x: position.x,
                        y: position.y,
                    });
                }
                FogNode::new(
                    id,
                    position,
                    mus[id],
                    lambdas[id],
                    tasks.cpu_speed_for(mus[id]),
                    cfg.queue_capacity,
                    cfg.tx_power_dbm,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            nodes,
            channel,
            tasks,
            weights,
            area,
            placement_seed,
            max_batch: cfg.max_batch,
        })
    }

    /// Copy with every node's arrival or service rate set to `value`.
    pub fn with_rate(&self, variable: SweepVariable, value: f64) -> Result<Self, HarnessError> {
        let mut out = self.clone();
        for node in &mut out.nodes {
            let (mu, lambda) = match variable {
                SweepVariable::Arrival => (node.mu, value),
                SweepVariable::Service => (value, node.lambda),
            };
            *node = FogNode::new(
                node.id,
                node.position,
                mu,
                lambda,
                self.tasks.cpu_speed_for(mu),
                node.queue_capacity,
                node.tx_power_dbm,
            )?;
        }
        Ok(out)
    }

    pub fn mdp(&self) -> Result<OffloadMdp, ModelError> {
        OffloadMdp::new(
            self.nodes.clone(),
            self.channel.clone(),
            self.tasks,
            self.weights,
            self.max_batch,
        )
    }
}

/// Aggregate metrics of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sweep_variable: String,
    pub sweep_value: f64,
    pub policy: PolicyKind,
    pub seed: u64,
    pub avg_reward: f64,
    /// Seconds per placed task, over slots that placed at least one task.
    pub avg_delay: f64,
    /// Dropped over offered tasks.
    pub avg_overload: f64,
    pub drop_count: u64,
    pub offered: u64,
    pub processed_local: u64,
    pub offloaded: u64,
    pub iterations: u64,
}

/// Accumulates per-slot outcomes into a [`MetricsReport`].
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    iterations: u64,
    reward_sum: f64,
    delay_sum: f64,
    delay_slots: u64,
    offered: u64,
    local: u64,
    offloaded: u64,
    dropped: u64,
}

impl MetricsAccumulator {
    pub fn push(&mut self, step: &StepOutcome) {
        self.iterations += 1;
        self.reward_sum += step.reward.total;
        if let Some(d) = step.reward.delay_per_task() {
            self.delay_sum += d;
            self.delay_slots += 1;
        }
        let p = &step.placement;
        self.offered += u64::from(p.offered);
        self.local += u64::from(p.local);
        self.offloaded += u64::from(p.offloaded);
        self.dropped += u64::from(p.dropped);
    }

    pub fn finish(&self, policy: PolicyKind, seed: u64) -> MetricsReport {
        let mean = |sum: f64, n: u64| if n == 0 { 0.0 } else { sum / n as f64 };
        MetricsReport {
            sweep_variable: String::new(),
            sweep_value: 0.0,
            policy,
            seed,
            avg_reward: mean(self.reward_sum, self.iterations),
            avg_delay: mean(self.delay_sum, self.delay_slots),
            avg_overload: mean(self.dropped as f64, self.offered),
            drop_count: self.dropped,
            offered: self.offered,
            processed_local: self.local,
            offloaded: self.offloaded,
            iterations: self.iterations,
        }
    }
}

/// Steps the MDP under a fixed policy for `iterations` slots, handing every
/// step to `observe`. Starts from node 1 holding one task with empty queues.
pub fn run_episode_with<F: FnMut(&StepOutcome)>(
    mdp: &OffloadMdp,
    policy: &Policy,
    iterations: u64,
    seed: u64,
    mut observe: F,
) -> MetricsReport {
    let mut env_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, Stream::Environment));
    let mut policy_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, Stream::Policy));
    let mut acc = MetricsAccumulator::default();
    let mut state = mdp.initial_state();
    for _ in 0..iterations {
        let action = policy.choose(mdp, &state, &mut policy_rng);
        let step = mdp.step(&state, &action, &mut env_rng);
        acc.push(&step);
        observe(&step);
        state = step.next;
    }
    acc.finish(policy.kind(), seed)
}

pub fn run_episode(mdp: &OffloadMdp, policy: &Policy, iterations: u64, seed: u64) -> (MetricsReport, Vec<StepOutcome>) {
    let mut trace = Vec::with_capacity(iterations.min(1 << 20) as usize);
    let report = run_episode_with(mdp, policy, iterations, seed, |s| trace.push(s.clone()));
    (report, trace)
}

/// Everything a rate sweep needs.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub scenario: ScenarioConfig,
    pub weights: RewardWeights,
    pub learning: LearningConfig,
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub policies: Vec<PolicyKind>,
    pub eval_iterations: u64,
    pub seeds: Vec<u64>,
}

impl SweepPlan {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            scenario: cfg.scenario.clone(),
            weights: cfg.reward,
            learning: cfg.learning.clone(),
            variable: cfg.experiment.sweep_variable,
            values: cfg.experiment.sweep_values.clone(),
            policies: cfg.experiment.policies.clone(),
            eval_iterations: cfg.experiment.eval_iterations,
            seeds: cfg.experiment.seeds.clone(),
        }
    }
}

/// Trains (if needed) and evaluates every requested policy on one scenario.
pub fn evaluate_point(
    scenario: &Scenario,
    learning: &LearningConfig,
    policies: &[PolicyKind],
    eval_iterations: u64,
    seed: u64,
) -> Result<Vec<MetricsReport>, HarnessError> {
    let mdp = scenario.mdp()?;
    policies
        .iter()
        .map(|kind| {
            let policy = build_policy(*kind, &mdp, learning, seed)?;
            Ok(run_episode_with(&mdp, &policy, eval_iterations, seed, |_| {}))
        })
        .collect()
}

/// Builds the evaluation policy for `kind`, training or solving as needed.
pub fn build_policy(
    kind: PolicyKind,
    mdp: &OffloadMdp,
    learning: &LearningConfig,
    seed: u64,
) -> Result<Policy, HarnessError> {
    use crate::solvers::{value_iteration, Enumerated};
    Ok(match kind {
        PolicyKind::Qlearning => {
            let cfg = LearningConfig {
                seed: derive_seed(seed, Stream::Training),
                ..learning.clone()
            };
            Policy::QLearning(train_with(mdp, &cfg, |_| {}))
        }
        PolicyKind::ValueIteration => {
            let view = Enumerated::new(mdp)?;
            let solution = value_iteration(&view, learning.discount, 1e-10, 100_000)?;
            Policy::from_solution(mdp, &solution)
        }
        other => Policy::Baseline(other.baseline().expect("remaining kinds are baselines")),
    })
}

/// Runs every `(value, seed, policy)` combination of the plan. Reports are
/// ordered by value, then seed, then policy as listed.
pub fn sweep(plan: &SweepPlan) -> Result<Vec<MetricsReport>, HarnessError> {
    if plan.values.is_empty() || plan.policies.is_empty() || plan.seeds.is_empty() {
        return Err(HarnessError::EmptySweep);
    }
    plan.learning.validate()?;
    let points: Vec<(f64, u64)> = plan
        .values
        .iter()
        .flat_map(|&v| plan.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let run = |&(value, seed): &(f64, u64)| -> Result<Vec<MetricsReport>, HarnessError> {
        let base = Scenario::generate(&plan.scenario, plan.weights, derive_seed(seed, Stream::Placement))?;
        let scenario = base.with_rate(plan.variable, value)?;
        let mut reports = evaluate_point(&scenario, &plan.learning, &plan.policies, plan.eval_iterations, seed)?;
        for r in &mut reports {
            r.sweep_variable = plan.variable.name().to_string();
            r.sweep_value = value;
        }
        Ok(reports)
    };
    #[cfg(feature = "parallel")]
    let results: Vec<_> = {
        use rayon::prelude::*;
        points.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<_> = points.iter().map(run).collect();
    let mut out = Vec::with_capacity(points.len() * plan.policies.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Outcome of comparing a trained table against exact value iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSeedResult {
    pub seed: u64,
    pub states: usize,
    pub bellman_residual: f64,
    pub sweeps: usize,
    /// States visited at least `min_visits` times during training.
    pub checked_states: usize,
    /// Share of checked states where the learned greedy action is optimal.
    pub agreement: f64,
}

/// Solves the scenario exactly, trains Q-learning on it and measures how
/// often the learned greedy action is among the optimal ones (values within
/// `1e-9` of the best) on states visited at least `min_visits` times.
pub fn oracle_check(
    scenario: &Scenario,
    learning: &LearningConfig,
    seed: u64,
    tolerance: f64,
    min_visits: u64,
) -> Result<OracleSeedResult, HarnessError> {
    use crate::solvers::{bellman_residual, train_with, value_iteration, Enumerated};
    let mdp = scenario.mdp()?;
    let view = Enumerated::new(&mdp)?;
    let solution = value_iteration(&view, learning.discount, tolerance, 1_000_000)?;
    let residual = bellman_residual(&view, learning.discount, &solution);
    let cfg = LearningConfig {
        seed: derive_seed(seed, Stream::Training),
        ..learning.clone()
    };
    let table = train_with(&mdp, &cfg, |_| {});
    let mut checked = 0;
    let mut agree = 0;
    for s in &solution.states {
        let key = mdp.state_key(s);
        if table.state_visits(key) < min_visits {
            continue;
        }
        checked += 1;
        let learned = table.greedy(key, &mdp.admissible_actions(s));
        if solution.optimal_actions(s, 1e-9).contains(&learned) {
            agree += 1;
        }
    }
    Ok(OracleSeedResult {
        seed,
        states: solution.states.len(),
        bellman_residual: residual,
        sweeps: solution.sweeps,
        checked_states: checked,
        agreement: if checked == 0 {
            0.0
        } else {
            agree as f64 / checked as f64
        },
    })
}

/// Median and interquartile range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            median: quantile(&v, 0.5),
            q1: quantile(&v, 0.25),
            q3: quantile(&v, 0.75),
        }
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    Spread::of(values).median
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub sweep_variable: String,
    pub sweep_value: f64,
    pub policy: PolicyKind,
    pub runs: usize,
    pub reward: Spread,
    pub delay: Spread,
    pub overload: Spread,
}

/// Seed-aggregated metrics per sweep value and policy.
pub fn summarize(reports: &[MetricsReport]) -> Vec<PointSummary> {
    let mut groups: BTreeMap<(u64, PolicyKind), Vec<&MetricsReport>> = BTreeMap::new();
    for r in reports {
        groups.entry((r.sweep_value.to_bits(), r.policy)).or_default().push(r);
    }
    let mut out: Vec<PointSummary> = groups
        .into_values()
        .map(|rs| {
            let col = |f: fn(&MetricsReport) -> f64| Spread::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            PointSummary {
                sweep_variable: rs[0].sweep_variable.clone(),
                sweep_value: rs[0].sweep_value,
                policy: rs[0].policy,
                runs: rs.len(),
                reward: col(|r| r.avg_reward),
                delay: col(|r| r.avg_delay),
                overload: col(|r| r.avg_overload),
            }
        })
        .collect();
    out.sort_by(|a, b| a.sweep_value.total_cmp(&b.sweep_value).then(a.policy.cmp(&b.policy)));
    out
}

/// Q-learning minus one baseline at one sweep value, on seed medians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyComparison {
    pub sweep_variable: String,
    pub sweep_value: f64,
    pub baseline: PolicyKind,
    pub reward_delta: f64,
    pub delay_delta: f64,
    pub overload_delta: f64,
    /// `overload_delta` in percentage points.
    pub overload_delta_pp: f64,
    /// Relative reward change, percent of the baseline magnitude.
    pub reward_delta_pct: f64,
    /// Relative delay change, percent of the baseline delay.
    pub delay_delta_pct: f64,
}

pub fn compare_policies(reports: &[MetricsReport]) -> Result<Vec<PolicyComparison>, HarnessError> {
    if let Some(first) = reports.first() {
        if let Some(other) = reports.iter().find(|r| r.sweep_variable != first.sweep_variable) {
            return Err(HarnessError::MismatchedCoordinates(format!(
                "sweep variable `{}` vs `{}`",
                first.sweep_variable, other.sweep_variable
            )));
        }
    }
    let mut points: BTreeMap<u64, BTreeMap<PolicyKind, Vec<&MetricsReport>>> = BTreeMap::new();
    for r in reports {
        points
            .entry(r.sweep_value.to_bits())
            .or_default()
            .entry(r.policy)
            .or_default()
            .push(r);
    }
    let mut out = Vec::new();
    for by_policy in points.values() {
        let Some(learned) = by_policy.get(&PolicyKind::Qlearning) else {
            let value = by_policy.values().next().map_or(f64::NAN, |v| v[0].sweep_value);
            return Err(HarnessError::MismatchedCoordinates(format!(
                "no qlearning report at sweep value {value}"
            )));
        };
        let seeds = |rs: &[&MetricsReport]| {
            let mut s: Vec<u64> = rs.iter().map(|r| r.seed).collect();
            s.sort_unstable();
            s
        };
        let learned_seeds = seeds(learned);
        let med =
            |rs: &[&MetricsReport], f: fn(&MetricsReport) -> f64| median(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
        for (kind, rs) in by_policy {
            if *kind == PolicyKind::Qlearning {
                continue;
            }
            if seeds(rs) != learned_seeds {
                return Err(HarnessError::MismatchedCoordinates(format!(
                    "policy {kind} at sweep value {} ran on different seeds",
                    rs[0].sweep_value
                )));
            }
            let (lr, ld, lo) = (
                med(learned, |r| r.avg_reward),
                med(learned, |r| r.avg_delay),
                med(learned, |r| r.avg_overload),
            );
            let (br, bd, bo) = (
                med(rs, |r| r.avg_reward),
                med(rs, |r| r.avg_delay),
                med(rs, |r| r.avg_overload),
            );
            let pct = |delta: f64, base: f64| if base == 0.0 { 0.0 } else { 100.0 * delta / base.abs() };
            out.push(PolicyComparison {
                sweep_variable: rs[0].sweep_variable.clone(),
                sweep_value: rs[0].sweep_value,
                baseline: *kind,
                reward_delta: lr - br,
                delay_delta: ld - bd,
                overload_delta: lo - bo,
                overload_delta_pp: 100.0 * (lo - bo),
                reward_delta_pct: pct(lr - br, br),
                delay_delta_pct: pct(ld - bd, bd),
            });
        }
    }
    Ok(out)
}

/// One CSV row; columns are fixed by the output schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub sweep_variable: String,
    pub sweep_value: f64,
    pub policy: PolicyKind,
    pub seed: u64,
    pub avg_reward: f64,
    pub avg_delay: f64,
    pub avg_overload: f64,
    pub drop_count: u64,
    pub iterations: u64,
}

impl From<&MetricsReport> for CsvRow {
    fn from(r: &MetricsReport) -> Self {
        Self {
            sweep_variable: r.sweep_variable.clone(),
            sweep_value: r.sweep_value,
            policy: r.policy,
            seed: r.seed,
            avg_reward: r.avg_reward,
            avg_delay: r.avg_delay,
            avg_overload: r.avg_overload,
            drop_count: r.drop_count,
            iterations: r.iterations,
        }
    }
}

pub fn write_csv<W: Write>(reports: &[MetricsReport], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(CsvRow::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRow>, HarnessError> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(Into::into)
}

/// Machine-readable summary of a batch of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub runs: Vec<MetricsReport>,
    pub points: Vec<PointSummary>,
    pub comparisons: Vec<PolicyComparison>,
}

impl SummaryDocument {
    /// Comparisons are left empty when the reports hold no Q-learning runs.
    pub fn new(reports: Vec<MetricsReport>) -> Self {
        let comparisons = compare_policies(&reports).unwrap_or_default();
        Self {
            points: summarize(&reports),
            runs: reports,
            comparisons,
        }
    }
}
