//! Heuristic offloading rules used as comparison points.
//!
//! Least-queue and nearest first fill the requesting node's free queue space
//! and offload only the overflow, capped by what the chosen target can take.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mdp::{OffloadAction, OffloadMdp, SystemState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Random,
    LeastQueue,
    Nearest,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [Self::Random, Self::LeastQueue, Self::Nearest];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::LeastQueue => "least-queue",
            Self::Nearest => "nearest",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown baseline `{s}`"))
    }
}

pub fn baseline_action<R: Rng + ?Sized>(
    kind: BaselineKind,
    mdp: &OffloadMdp,
    s: &SystemState,
    rng: &mut R,
) -> OffloadAction {
    match kind {
        BaselineKind::Random => {
            let actions = mdp.admissible_actions(s);
            actions[rng.random_range(0..actions.len())]
        }
        BaselineKind::LeastQueue => overflow_to(mdp, s, |t| f64::from(s.queues[t])),
        BaselineKind::Nearest => {
            let here = &mdp.nodes()[s.requesting];
            overflow_to(mdp, s, |t| here.distance_to(&mdp.nodes()[t]))
        }
    }
}

/// Offloads the overflow of `s` to the admissible target minimizing `score`
/// (lowest id on ties).
fn overflow_to<F: Fn(usize) -> f64>(mdp: &OffloadMdp, s: &SystemState, score: F) -> OffloadAction {
    let mut best: Option<(usize, u32, f64)> = None;
    for target in 0..mdp.node_count() {
        if let Some(cap) = mdp.offload_capacity(s, target) {
            let v = score(target);
            if best.is_none_or(|(_, _, b)| v < b) {
                best = Some((target, cap, v));
            }
        }
    }
    let Some((target, cap, _)) = best else {
        return OffloadAction::Local;
    };
    let local = mdp.local_split(s, &OffloadAction::Local);
    let count = (s.batch - local).min(cap);
    if count == 0 {
        OffloadAction::Local
    } else {
        OffloadAction::Offload { target, count }
    }
}
