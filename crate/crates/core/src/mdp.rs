//! The offloading MDP: states, admissible actions, the local/offload split,
//! the reward decomposition and the stochastic transition law.
//!
//! A state is `(requesting node, batch size, queue lengths)`. An action either
//! keeps the whole batch local or offloads `count` tasks to one neighbor; the
//! local share is whatever still fits in the requesting node's queue and the
//! rest of the batch is dropped.
//!
//! Transition law (shared by the sampler and the exact enumerator):
//! 1. placed tasks join the queues of the requesting node and the target;
//! 2. every node `i` serves `min(Poisson(mu_i), Q_i)` tasks from its
//!    pre-placement queue, so `Q'_i = min(Q_i - served_i + w_i, cap_i)`;
//! 3. the next requesting node is drawn with probability proportional to
//!    `lambda_i`;
//! 4. the next batch is `Poisson(lambda_next)`, redrawn while zero and clipped
//!    at `max_batch`.

use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{comm_time, exec_time, transmission_rate, wait_time, ChannelModel, FogNode, TaskProfile};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SystemState {
    /// Zero-based index of the node holding the batch.
    pub requesting: usize,
    /// Tasks to allocate this slot, in `1..=max_batch`.
    pub batch: u32,
    pub queues: Vec<u32>,
}

impl SystemState {
    pub fn new(requesting: usize, batch: u32, queues: Vec<u32>) -> Self {
        Self {
            requesting,
            batch,
            queues,
        }
    }
}

impl fmt::Display for SystemState {
    /// Canonical text key: `node:batch:q1,q2,...` with a one-based node id.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:", self.requesting + 1, self.batch)?;
        for (i, q) in self.queues.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{q}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for SystemState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.splitn(3, ':');
        let (Some(node), Some(batch), Some(queues)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format!("malformed state key `{s}`"));
        };
        let node: usize = node.parse().map_err(|_| format!("bad node id in `{s}`"))?;
        if node == 0 {
            return Err(format!("node ids are one-based in `{s}`"));
        }
        let batch = batch.parse().map_err(|_| format!("bad batch size in `{s}`"))?;
        let queues = queues
            .split(',')
            .map(|q| q.parse::<u32>().map_err(|_| format!("bad queue length in `{s}`")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(node - 1, batch, queues))
    }
}

/// Offloading decision for one slot.
///
/// The derived ordering (`Local` first, then by target and count) is the
/// tie-break order used by every argmax in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OffloadAction {
    Local,
    Offload { target: usize, count: u32 },
}

impl OffloadAction {
    pub fn target(&self) -> Option<usize> {
        match *self {
            Self::Local => None,
            Self::Offload { target, .. } => Some(target),
        }
    }

    pub fn offload_count(&self) -> u32 {
        match *self {
            Self::Local => 0,
            Self::Offload { count, .. } => count,
        }
    }
}

impl fmt::Display for OffloadAction {
    /// Canonical text key: `local`, or `target:count` with a one-based target.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Local => f.write_str("local"),
            Self::Offload { target, count } => write!(f, "{}:{}", target + 1, count),
        }
    }
}

impl std::str::FromStr for OffloadAction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "local" {
            return Ok(Self::Local);
        }
        let (t, c) = s.split_once(':').ok_or_else(|| format!("malformed action key `{s}`"))?;
        let target: usize = t.parse().map_err(|_| format!("bad target in `{s}`"))?;
        let count: u32 = c.parse().map_err(|_| format!("bad count in `{s}`"))?;
        if target == 0 || count == 0 {
            return Err(format!("offload action needs one-based target and count >= 1: `{s}`"));
        }
        Ok(Self::Offload {
            target: target - 1,
            count,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardWeights {
    pub utility_reward: f64,
    pub delay_weight: f64,
    pub overload_weight: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            utility_reward: 10.0,
            delay_weight: 1.0,
            overload_weight: 150.0,
        }
    }
}

/// Reward of one state/action pair together with the terms behind it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RewardBreakdown {
    pub utility: f64,
    pub delay: f64,
    pub overload: f64,
    pub t_wait: f64,
    pub t_comm: f64,
    pub t_exec: f64,
    /// Placement-weighted overload probability before `overload_weight`.
    pub overload_probability: f64,
    pub local: u32,
    pub offloaded: u32,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn placed(&self) -> u32 {
        self.local + self.offloaded
    }

    /// Unweighted end-to-end time per placed task; `None` if nothing was placed.
    pub fn delay_per_task(&self) -> Option<f64> {
        let placed = self.placed();
        (placed > 0).then(|| (self.t_wait + self.t_comm + self.t_exec) / f64::from(placed))
    }
}

/// Where the tasks of one batch ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Placement {
    pub offered: u32,
    pub local: u32,
    pub offloaded: u32,
    pub dropped: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next: SystemState,
    pub placement: Placement,
    pub reward: RewardBreakdown,
}

/// Dense integer encoding of a [`SystemState`] for one MDP instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateKey(pub u64);

/// Estimated queue length after one slot of mean service and `placed` arrivals.
pub fn next_queue_estimate(queue: f64, mu: f64, placed: u32, capacity: u32) -> f64 {
    ((queue - mu).max(0.0) + f64::from(placed)).min(f64::from(capacity))
}

/// Fraction of the node's next-slot arrivals expected to find no queue space.
pub fn overload_probability(node: &FogNode, next_queue: f64) -> f64 {
    let free = f64::from(node.queue_capacity) - next_queue;
    (node.lambda - free).max(0.0) / node.lambda
}

/// Probability that a node with `queue` waiting tasks serves `k` of them,
/// for `k` in `0..=queue`. The Poisson tail beyond `queue` is lumped at `queue`.
pub fn served_distribution(queue: u32, mu: f64) -> Vec<f64> {
    let pmf = poisson_pmf(mu, queue as usize);
    let mut out = pmf[..queue as usize].to_vec();
    let head: f64 = out.iter().sum();
    out.push((1.0 - head).max(0.0));
    out
}

/// Law of the batch size: `Poisson(lambda)` conditioned on being non-zero and
/// clipped at `max_batch`. Entry `k - 1` is the probability of batch `k`.
pub fn batch_distribution(lambda: f64, max_batch: u32) -> Vec<f64> {
    let pmf = poisson_pmf(lambda, max_batch as usize);
    let nonzero = 1.0 - pmf[0];
    let mut out: Vec<f64> = pmf[1..max_batch as usize].iter().map(|p| p / nonzero).collect();
    let head: f64 = out.iter().sum();
    out.push((1.0 - head).max(0.0));
    out
}

fn poisson_pmf(rate: f64, upto: usize) -> Vec<f64> {
    let mut pmf = Vec::with_capacity(upto + 1);
    let mut p = (-rate).exp();
    for k in 0..=upto {
        pmf.push(p);
        p *= rate / (k + 1) as f64;
    }
    pmf
}

/// One offloading MDP instance: a node set, link rates and reward weights.
#[derive(Debug, Clone)]
pub struct OffloadMdp {
    nodes: Vec<FogNode>,
    channel: ChannelModel,
    tasks: TaskProfile,
    weights: RewardWeights,
    max_batch: u32,
    rates: Vec<f64>,
    service: Vec<Poisson<f64>>,
    arrival: Vec<Poisson<f64>>,
    requester: WeightedIndex<f64>,
}

impl OffloadMdp {
    pub fn new(
        nodes: Vec<FogNode>,
        channel: ChannelModel,
        tasks: TaskProfile,
        weights: RewardWeights,
        max_batch: u32,
    ) -> Result<Self, ModelError> {
        let n = nodes.len();
        if n < 2 {
            return Err(ModelError::TooFewNodes(n));
        }
        if max_batch < 1 {
            return Err(ModelError::InvalidParameter {
                field: "max_batch",
                reason: "must be at least 1".into(),
            });
        }
        for (field, w) in [
            ("utility_reward", weights.utility_reward),
            ("delay_weight", weights.delay_weight),
            ("overload_weight", weights.overload_weight),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(ModelError::InvalidParameter {
                    field,
                    reason: format!("must be finite and >= 0, got {w}"),
                });
            }
        }
        let mut rates = vec![f64::NAN; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    rates[i * n + j] = transmission_rate(&nodes[i], &nodes[j], &channel)?;
                }
            }
        }
        let poisson = |rate: f64, field: &'static str| {
            Poisson::new(rate).map_err(|e| ModelError::InvalidParameter {
                field,
                reason: e.to_string(),
            })
        };
        let service = nodes.iter().map(|nd| poisson(nd.mu, "mu")).collect::<Result<_, _>>()?;
        let arrival = nodes
            .iter()
            .map(|nd| poisson(nd.lambda, "lambda"))
            .collect::<Result<_, _>>()?;
        let requester =
            WeightedIndex::new(nodes.iter().map(|nd| nd.lambda)).map_err(|e| ModelError::InvalidParameter {
                field: "lambda",
                reason: e.to_string(),
            })?;
        let mdp = Self {
            nodes,
            channel,
            tasks,
            weights,
            max_batch,
            rates,
            service,
            arrival,
            requester,
        };
        let count = mdp.state_count();
        if count > u128::from(u64::MAX) {
            return Err(ModelError::StateSpaceOverflow(count));
        }
        Ok(mdp)
    }

    pub fn nodes(&self) -> &[FogNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn channel(&self) -> &ChannelModel {
        &self.channel
    }

    pub fn tasks(&self) -> &TaskProfile {
        &self.tasks
    }

    pub fn weights(&self) -> &RewardWeights {
        &self.weights
    }

    pub fn max_batch(&self) -> u32 {
        self.max_batch
    }

    /// Link rate from node `src` to node `dst` in bit/s.
    pub fn rate(&self, src: usize, dst: usize) -> f64 {
        self.rates[src * self.nodes.len() + dst]
    }

    /// Algorithm start state: node 1 holds a single task, all queues empty.
    pub fn initial_state(&self) -> SystemState {
        SystemState::new(0, 1, vec![0; self.nodes.len()])
    }

    pub fn is_valid_state(&self, s: &SystemState) -> bool {
        s.requesting < self.nodes.len()
            && (1..=self.max_batch).contains(&s.batch)
            && s.queues.len() == self.nodes.len()
            && s.queues.iter().zip(&self.nodes).all(|(q, n)| *q <= n.queue_capacity)
    }

    /// Number of states in the full (dense) state space.
    pub fn state_count(&self) -> u128 {
        let queues: u128 = self.nodes.iter().map(|n| u128::from(n.queue_capacity) + 1).product();
        self.nodes.len() as u128 * u128::from(self.max_batch) * queues
    }

    pub fn state_key(&self, s: &SystemState) -> StateKey {
        let mut key = s.requesting as u64;
        key = key * u64::from(self.max_batch) + u64::from(s.batch - 1);
        for (q, n) in s.queues.iter().zip(&self.nodes) {
            key = key * (u64::from(n.queue_capacity) + 1) + u64::from(*q);
        }
        StateKey(key)
    }

    pub fn decode_state(&self, key: StateKey) -> SystemState {
        let mut rest = key.0;
        let mut queues = vec![0; self.nodes.len()];
        for (q, n) in queues.iter_mut().zip(&self.nodes).rev() {
            let radix = u64::from(n.queue_capacity) + 1;
            *q = (rest % radix) as u32;
            rest /= radix;
        }
        let batch = (rest % u64::from(self.max_batch)) as u32 + 1;
        let requesting = (rest / u64::from(self.max_batch)) as usize;
        SystemState::new(requesting, batch, queues)
    }

    /// Largest count the requesting node may offload to `target`, or `None`
    /// if `target` is not an admissible neighbor.
    pub fn offload_capacity(&self, s: &SystemState, target: usize) -> Option<u32> {
        if target == s.requesting || s.queues[target] > s.queues[s.requesting] {
            return None;
        }
        let free = self.nodes[target].queue_capacity.saturating_sub(s.queues[target]);
        let cap = s.batch.min(free);
        (cap > 0).then_some(cap)
    }

    /// All admissible actions of `s` in ascending tie-break order. Never empty.
    pub fn admissible_actions(&self, s: &SystemState) -> Vec<OffloadAction> {
        let mut actions = vec![OffloadAction::Local];
        for target in 0..self.nodes.len() {
            if let Some(cap) = self.offload_capacity(s, target) {
                actions.extend((1..=cap).map(|count| OffloadAction::Offload { target, count }));
            }
        }
        actions
    }

    pub fn is_admissible(&self, s: &SystemState, a: &OffloadAction) -> bool {
        match *a {
            OffloadAction::Local => true,
            OffloadAction::Offload { target, count } => {
                target < self.nodes.len()
                    && count >= 1
                    && self.offload_capacity(s, target).is_some_and(|cap| count <= cap)
            }
        }
    }

    /// Tasks kept at the requesting node: the non-offloaded part of the batch
    /// that fits in its free queue space.
    pub fn local_split(&self, s: &SystemState, a: &OffloadAction) -> u32 {
        let remaining = s.batch.saturating_sub(a.offload_count());
        let free = self.nodes[s.requesting]
            .queue_capacity
            .saturating_sub(s.queues[s.requesting]);
        remaining.min(free)
    }

    pub fn placement(&self, s: &SystemState, a: &OffloadAction) -> Placement {
        let local = self.local_split(s, a);
        let offloaded = a.offload_count();
        Placement {
            offered: s.batch,
            local,
            offloaded,
            dropped: s.batch - local - offloaded,
        }
    }

    pub fn reward(&self, s: &SystemState, a: &OffloadAction) -> RewardBreakdown {
        let l = s.requesting;
        let local_node = &self.nodes[l];
        let local = self.local_split(s, a);
        let offloaded = a.offload_count();
        let placed = local + offloaded;
        let q_local = f64::from(s.queues[l]);

        let (t_wait, t_comm, t_exec, remote_overload) = match a.target() {
            Some(o) if offloaded > 0 => {
                let remote = &self.nodes[o];
                let q_remote = f64::from(s.queues[o]);
                let q_next = next_queue_estimate(q_remote, remote.mu, offloaded, remote.queue_capacity);
                (
                    wait_time(local, offloaded, q_local, q_remote, local_node.mu, remote.mu),
                    comm_time(offloaded, self.rate(l, o), &self.tasks),
                    exec_time(local, offloaded, local_node, remote, &self.tasks),
                    overload_probability(remote, q_next),
                )
            }
            _ => (
                wait_time(local, 0, q_local, 0.0, local_node.mu, local_node.mu),
                0.0,
                exec_time(local, 0, local_node, local_node, &self.tasks),
                0.0,
            ),
        };

        let utility = self.weights.utility_reward * f64::from(placed).ln_1p();
        let (delay, overload_probability) = if placed == 0 {
            (0.0, 0.0)
        } else {
            let q_next = next_queue_estimate(q_local, local_node.mu, local, local_node.queue_capacity);
            let local_overload = overload_probability(local_node, q_next);
            let n = f64::from(placed);
            (
                (t_wait + t_comm + t_exec) / n,
                (f64::from(local) * local_overload + f64::from(offloaded) * remote_overload) / n,
            )
        };
        let delay = self.weights.delay_weight * delay;
        let overload = self.weights.overload_weight * overload_probability;
        RewardBreakdown {
            utility,
            delay,
            overload,
            t_wait,
            t_comm,
            t_exec,
            overload_probability,
            local,
            offloaded,
            total: utility - (delay + overload),
        }
    }

    /// Queue lengths after placing `placement` and serving `served` tasks per node.
    fn advance_queues(&self, s: &SystemState, a: &OffloadAction, local: u32, served: &[u32]) -> Vec<u32> {
        let mut queues = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let placed = if i == s.requesting {
                local
            } else if a.target() == Some(i) {
                a.offload_count()
            } else {
                0
            };
            queues.push((s.queues[i] - served[i] + placed).min(node.queue_capacity));
        }
        queues
    }

    /// Draws the next requesting node and its batch size.
    pub fn sample_request<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, u32) {
        let node = self.requester.sample(rng);
        let batch = loop {
            let draw = self.arrival[node].sample(rng);
            if draw >= 1.0 {
                break draw;
            }
        };
        (node, (batch as u64).min(u64::from(self.max_batch)) as u32)
    }

    /// Applies `a` in `s` and samples the successor state.
    pub fn step<R: Rng + ?Sized>(&self, s: &SystemState, a: &OffloadAction, rng: &mut R) -> StepOutcome {
        let placement = self.placement(s, a);
        let reward = self.reward(s, a);
        let served: Vec<u32> = s
            .queues
            .iter()
            .zip(&self.service)
            .map(|(&q, dist)| (dist.sample(rng) as u64).min(u64::from(q)) as u32)
            .collect();
        let queues = self.advance_queues(s, a, placement.local, &served);
        let (requesting, batch) = self.sample_request(rng);
        StepOutcome {
            next: SystemState::new(requesting, batch, queues),
            placement,
            reward,
        }
    }

    pub fn sample_transition<R: Rng + ?Sized>(&self, s: &SystemState, a: &OffloadAction, rng: &mut R) -> SystemState {
        self.step(s, a, rng).next
    }

    /// Exact successor distribution of `(s, a)` under the sampler's law.
    /// Successor states with zero probability are omitted.
    pub fn transition_distribution(&self, s: &SystemState, a: &OffloadAction) -> Vec<(SystemState, f64)> {
        let local = self.local_split(s, a);
        let served_laws: Vec<Vec<f64>> = s
            .queues
            .iter()
            .zip(&self.nodes)
            .map(|(&q, n)| served_distribution(q, n.mu))
            .collect();
        let total_lambda: f64 = self.nodes.iter().map(|n| n.lambda).sum();
        let requests: Vec<(usize, u32, f64)> = self
            .nodes
            .iter()
            .enumerate()
            .flat_map(|(i, n)| {
                let p_node = n.lambda / total_lambda;
                batch_distribution(n.lambda, self.max_batch)
                    .into_iter()
                    .enumerate()
                    .map(move |(k, p)| (i, k as u32 + 1, p_node * p))
            })
            .filter(|&(_, _, p)| p > 0.0)
            .collect();

        let mut out = Vec::new();
        let mut served = vec![0u32; self.nodes.len()];
        loop {
            let p_served: f64 = served
                .iter()
                .zip(&served_laws)
                .map(|(&k, law)| law[k as usize])
                .product();
            if p_served > 0.0 {
                let queues = self.advance_queues(s, a, local, &served);
                for &(node, batch, p) in &requests {
                    out.push((SystemState::new(node, batch, queues.clone()), p_served * p));
                }
            }
            // odometer over served counts
            let mut i = 0;
            loop {
                if i == served.len() {
                    return out;
                }
                if served[i] < s.queues[i] {
                    served[i] += 1;
                    break;
                }
                served[i] = 0;
                i += 1;
            }
        }
    }
}
