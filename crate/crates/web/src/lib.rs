//! Browser bindings. Each exported function takes plain numbers and returns a
//! JSON string; the Rust-side functions are usable (and tested) natively.

use fogq_core::config::ScenarioConfig;
use fogq_core::harness::{derive_seed, evaluate_point, MetricsReport, Stream};
use fogq_core::mdp::SystemState;
use fogq_core::model::{comm_time, transmission_rate, Position};
use fogq_core::solvers::LearningConfig;
use fogq_core::{OffloadMdp, PolicyKind, RewardWeights, Scenario};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkPoint {
    pub distance_m: f64,
    pub rate_bps: f64,
    /// Round trip of one task over the link.
    pub comm_time_s: f64,
}

fn pair(distance_m: f64, data_size_mbytes: f64, queues: u32) -> Result<OffloadMdp, String> {
    let cfg = ScenarioConfig {
        nodes: 2,
        data_size_mbytes,
        queue_capacity: queues,
        area_width_m: distance_m.max(100.0),
        ..ScenarioConfig::default()
    };
    let positions = vec![Position::new(0.0, 0.0), Position::new(distance_m, 0.0)];
    Scenario::with_positions(&cfg, RewardWeights::default(), 0, positions)
        .and_then(|s| Ok(s.mdp()?))
        .map_err(|e| e.to_string())
}

/// Link rate and per-task communication time for `points` distances in
/// `(0, max_distance_m]`.
pub fn link_curve(max_distance_m: f64, points: usize, data_size_mbytes: f64) -> Result<Vec<LinkPoint>, String> {
    if max_distance_m.is_nan() || max_distance_m <= 0.0 || points == 0 {
        return Err("need a positive distance and at least one point".into());
    }
    (1..=points)
        .map(|i| {
            let d = max_distance_m * i as f64 / points as f64;
            let mdp = pair(d, data_size_mbytes, 10)?;
            let rate = transmission_rate(&mdp.nodes()[0], &mdp.nodes()[1], mdp.channel()).map_err(|e| e.to_string())?;
            Ok(LinkPoint {
                distance_m: d,
                rate_bps: rate,
                comm_time_s: comm_time(1, rate, mdp.tasks()),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionBreakdown {
    pub action: String,
    pub local: u32,
    pub offloaded: u32,
    pub dropped: u32,
    pub utility: f64,
    pub delay: f64,
    pub overload: f64,
    pub total: f64,
    pub t_wait: f64,
    pub t_comm: f64,
    pub t_exec: f64,
}

/// Reward terms of every admissible action for a two-node pair, the
/// requester holding `local_queue` tasks and its neighbor `remote_queue`.
pub fn reward_table(
    distance_m: f64,
    data_size_mbytes: f64,
    batch: u32,
    local_queue: u32,
    remote_queue: u32,
) -> Result<Vec<ActionBreakdown>, String> {
    let mdp = pair(distance_m, data_size_mbytes, 10)?;
    let s = SystemState::new(0, batch, vec![local_queue, remote_queue]);
    if !mdp.is_valid_state(&s) {
        return Err(format!("state {s} is outside 1..=10 tasks and 0..=10 queue slots"));
    }
    Ok(mdp
        .admissible_actions(&s)
        .into_iter()
        .map(|a| {
            let p = mdp.placement(&s, &a);
            let r = mdp.reward(&s, &a);
            ActionBreakdown {
                action: a.to_string(),
                local: p.local,
                offloaded: p.offloaded,
                dropped: p.dropped,
                utility: r.utility,
                delay: r.delay,
                overload: r.overload,
                total: r.total,
                t_wait: r.t_wait,
                t_comm: r.t_comm,
                t_exec: r.t_exec,
            }
        })
        .collect())
}

/// Trains Q-learning and evaluates it next to the three heuristics on the
/// default five-node network with the given rates.
pub fn compare(
    arrival_rate: f64,
    service_rate: f64,
    seed: u64,
    train_iterations: u64,
    eval_iterations: u64,
) -> Result<Vec<MetricsReport>, String> {
    let cfg = ScenarioConfig {
        arrival_rate,
        service_rate,
        ..ScenarioConfig::default()
    };
    let learning = LearningConfig {
        max_iterations: train_iterations,
        ..LearningConfig::default()
    };
    learning.validate().map_err(|e| e.to_string())?;
    let scenario = Scenario::generate(&cfg, RewardWeights::default(), derive_seed(seed, Stream::Placement))
        .map_err(|e| e.to_string())?;
    evaluate_point(&scenario, &learning, &PolicyKind::STANDARD, eval_iterations, seed).map_err(|e| e.to_string())
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
        .and_then(|v| serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string())))
}

#[wasm_bindgen(js_name = linkCurve)]
pub fn link_curve_js(max_distance_m: f64, points: usize, data_size_mbytes: f64) -> Result<String, JsError> {
    to_js(link_curve(max_distance_m, points, data_size_mbytes))
}

#[wasm_bindgen(js_name = rewardTable)]
pub fn reward_table_js(
    distance_m: f64,
    data_size_mbytes: f64,
    batch: u32,
    local_queue: u32,
    remote_queue: u32,
) -> Result<String, JsError> {
    to_js(reward_table(
        distance_m,
        data_size_mbytes,
        batch,
        local_queue,
        remote_queue,
    ))
}

#[wasm_bindgen(js_name = comparePolicies)]
pub fn compare_js(
    arrival_rate: f64,
    service_rate: f64,
    seed: u32,
    train_iterations: u32,
    eval_iterations: u32,
) -> Result<String, JsError> {
    to_js(compare(
        arrival_rate,
        service_rate,
        u64::from(seed),
        u64::from(train_iterations),
        u64::from(eval_iterations),
    ))
}
