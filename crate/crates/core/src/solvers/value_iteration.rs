//! Exact dynamic programming over small, fully enumerable MDPs.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::SolverError;
use crate::mdp::{OffloadAction, OffloadMdp, StateKey, SystemState};

/// Largest state space [`Enumerated`] will expand.
pub const MAX_ENUMERATED_STATES: usize = 200_000;

/// A finite MDP with explicit transition probabilities.
pub trait FiniteMdp {
    type State: Clone + Eq + Hash;
    type Action: Clone + Ord;

    fn states(&self) -> Vec<Self::State>;
    /// Available actions, in tie-break order.
    fn actions(&self, s: &Self::State) -> Vec<Self::Action>;
    fn reward(&self, s: &Self::State, a: &Self::Action) -> f64;
    fn transitions(&self, s: &Self::State, a: &Self::Action) -> Vec<(Self::State, f64)>;
}

/// Enumerable view of an [`OffloadMdp`].
#[derive(Debug, Clone, Copy)]
pub struct Enumerated<'a> {
    mdp: &'a OffloadMdp,
}

impl<'a> Enumerated<'a> {
    pub fn new(mdp: &'a OffloadMdp) -> Result<Self, SolverError> {
        let states = mdp.state_count();
        if states > MAX_ENUMERATED_STATES as u128 {
            return Err(SolverError::TooLarge {
                states,
                limit: MAX_ENUMERATED_STATES,
            });
        }
        Ok(Self { mdp })
    }
}

impl FiniteMdp for Enumerated<'_> {
    type State = SystemState;
    type Action = OffloadAction;

    fn states(&self) -> Vec<SystemState> {
        (0..self.mdp.state_count() as u64)
            .map(|k| self.mdp.decode_state(StateKey(k)))
            .collect()
    }

    fn actions(&self, s: &SystemState) -> Vec<OffloadAction> {
        self.mdp.admissible_actions(s)
    }

    fn reward(&self, s: &SystemState, a: &OffloadAction) -> f64 {
        self.mdp.reward(s, a).total
    }

    fn transitions(&self, s: &SystemState, a: &OffloadAction) -> Vec<(SystemState, f64)> {
        self.mdp.transition_distribution(s, a)
    }
}

struct Choice<A> {
    action: A,
    reward: f64,
    next: Vec<(usize, f64)>,
}

/// Optimal values, action values and greedy policy of a finite MDP.
#[derive(Debug, Clone)]
pub struct ValueSolution<S, A> {
    pub states: Vec<S>,
    pub values: Vec<f64>,
    /// Action values per state, in the MDP's action order.
    pub action_values: Vec<Vec<(A, f64)>>,
    pub policy: Vec<A>,
    pub sweeps: usize,
    pub last_change: f64,
    index: HashMap<S, usize>,
}

impl<S: Clone + Eq + Hash, A: Clone + Ord> ValueSolution<S, A> {
    pub fn index_of(&self, s: &S) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn value(&self, s: &S) -> Option<f64> {
        self.index_of(s).map(|i| self.values[i])
    }

    pub fn action(&self, s: &S) -> Option<&A> {
        self.index_of(s).map(|i| &self.policy[i])
    }

    /// Actions of `s` whose value is within `tol` of the best one.
    pub fn optimal_actions(&self, s: &S, tol: f64) -> Vec<A> {
        let Some(i) = self.index_of(s) else {
            return Vec::new();
        };
        self.action_values[i]
            .iter()
            .filter(|(_, q)| *q >= self.values[i] - tol)
            .map(|(a, _)| a.clone())
            .collect()
    }
}

/// Runs `v(s) <- max_a Σ p(s'|s,a)(r(s,a) + γ v(s'))` until the sup-norm
/// change of a sweep falls below `tolerance`.
pub fn value_iteration<M: FiniteMdp>(
    mdp: &M,
    gamma: f64,
    tolerance: f64,
    max_sweeps: usize,
) -> Result<ValueSolution<M::State, M::Action>, SolverError> {
    let states = mdp.states();
    let index: HashMap<M::State, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let model: Vec<Vec<Choice<M::Action>>> = states
        .iter()
        .map(|s| {
            mdp.actions(s)
                .into_iter()
                .map(|a| {
                    let next = mdp
                        .transitions(s, &a)
                        .into_iter()
                        .map(|(t, p)| (index[&t], p))
                        .collect();
                    Choice {
                        reward: mdp.reward(s, &a),
                        action: a,
                        next,
                    }
                })
                .collect()
        })
        .collect();

    let backup =
        |c: &Choice<M::Action>, v: &[f64]| c.reward + gamma * c.next.iter().map(|&(j, p)| p * v[j]).sum::<f64>();

    let mut values = vec![0.0; states.len()];
    let mut sweeps = 0;
    let mut change = f64::INFINITY;
    while change >= tolerance {
        if sweeps == max_sweeps {
            return Err(SolverError::NotConverged {
                tolerance,
                iterations: max_sweeps,
            });
        }
        let next: Vec<f64> = model
            .iter()
            .map(|choices| {
                choices
                    .iter()
                    .map(|c| backup(c, &values))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        change = next.iter().zip(&values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        values = next;
        sweeps += 1;
    }

    let mut action_values = Vec::with_capacity(states.len());
    let mut policy = Vec::with_capacity(states.len());
    for choices in &model {
        let qs: Vec<(M::Action, f64)> = choices.iter().map(|c| (c.action.clone(), backup(c, &values))).collect();
        let mut best = 0;
        for (i, (_, q)) in qs.iter().enumerate() {
            if *q > qs[best].1 {
                best = i;
            }
        }
        policy.push(qs[best].0.clone());
        action_values.push(qs);
    }

    Ok(ValueSolution {
        states,
        values,
        action_values,
        policy,
        sweeps,
        last_change: change,
        index,
    })
}

/// Largest violation of the Bellman optimality equation by `values`.
pub fn bellman_residual<M: FiniteMdp>(mdp: &M, gamma: f64, solution: &ValueSolution<M::State, M::Action>) -> f64 {
    solution
        .states
        .iter()
        .zip(&solution.values)
        .map(|(s, v)| {
            let best = mdp
                .actions(s)
                .iter()
                .map(|a| {
                    let future: f64 = mdp
                        .transitions(s, a)
                        .iter()
                        .map(|(t, p)| p * solution.values[solution.index[t]])
                        .sum();
                    mdp.reward(s, a) + gamma * future
                })
                .fold(f64::NEG_INFINITY, f64::max);
            (best - v).abs()
        })
        .fold(0.0, f64::max)
}
