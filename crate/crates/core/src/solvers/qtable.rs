//! Sparse tabular action-value store.
//!
//! Text export format, one entry per line:
//!
//! ```text
//! <state-key>\t<action-key>\t<value>\t<visits>
//! ```
//!
//! `state-key` is `node:batch:q1,...,qN` (one-based node id) and `action-key`
//! is `local` or `target:count` (one-based target). Lines are sorted by state
//! then action, values use the shortest representation that parses back to
//! the same `f64`.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::SolverError;
use crate::mdp::{OffloadAction, OffloadMdp, StateKey, SystemState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QEntry {
    pub action: OffloadAction,
    pub value: f64,
    pub visits: u64,
}

/// Action values keyed by dense state key; absent entries read as zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QTable {
    states: HashMap<StateKey, Vec<QEntry>>,
}

impl QTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Number of stored state/action entries.
    pub fn len(&self) -> usize {
        self.states.values().map(Vec::len).sum()
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn entries(&self, state: StateKey) -> &[QEntry] {
        self.states.get(&state).map_or(&[], Vec::as_slice)
    }

    pub fn states(&self) -> impl Iterator<Item = StateKey> + '_ {
        self.states.keys().copied()
    }

    pub fn get(&self, state: StateKey, action: &OffloadAction) -> f64 {
        self.entry(state, action).map_or(0.0, |e| e.value)
    }

    pub fn visits(&self, state: StateKey, action: &OffloadAction) -> u64 {
        self.entry(state, action).map_or(0, |e| e.visits)
    }

    pub fn state_visits(&self, state: StateKey) -> u64 {
        self.entries(state).iter().map(|e| e.visits).sum()
    }

    fn entry(&self, state: StateKey, action: &OffloadAction) -> Option<&QEntry> {
        let row = self.states.get(&state)?;
        row.binary_search_by(|e| e.action.cmp(action)).ok().map(|i| &row[i])
    }

    /// Writes `value` and counts one visit.
    pub fn record(&mut self, state: StateKey, action: OffloadAction, value: f64) {
        let row = self.states.entry(state).or_default();
        match row.binary_search_by(|e| e.action.cmp(&action)) {
            Ok(i) => {
                row[i].value = value;
                row[i].visits += 1;
            }
            Err(i) => row.insert(
                i,
                QEntry {
                    action,
                    value,
                    visits: 1,
                },
            ),
        }
    }

    /// `max_a Q(state, a)` over `actions`, which must be the full admissible
    /// set of the state so that unwritten actions count as zero.
    pub fn max_value(&self, state: StateKey, actions: &[OffloadAction]) -> f64 {
        let row = self.entries(state);
        let written = row.iter().map(|e| e.value).fold(f64::NEG_INFINITY, f64::max);
        if row.len() < actions.len() {
            written.max(0.0)
        } else {
            written
        }
    }

    /// Highest-valued action of `actions` (ascending order assumed); ties go
    /// to the earliest action.
    pub fn greedy(&self, state: StateKey, actions: &[OffloadAction]) -> OffloadAction {
        let row = self.entries(state);
        let mut best = actions[0];
        let mut best_value = f64::NEG_INFINITY;
        let mut j = 0;
        for &a in actions {
            while j < row.len() && row[j].action < a {
                j += 1;
            }
            let v = if j < row.len() && row[j].action == a {
                row[j].value
            } else {
                0.0
            };
            if v > best_value {
                best = a;
                best_value = v;
            }
        }
        best
    }

    pub fn write_tsv<W: Write>(&self, mdp: &OffloadMdp, mut out: W) -> std::io::Result<()> {
        let mut keys: Vec<StateKey> = self.states.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let state = mdp.decode_state(key);
            for e in &self.states[&key] {
                writeln!(out, "{state}\t{}\t{}\t{}", e.action, e.value, e.visits)?;
            }
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(mdp: &OffloadMdp, input: R) -> Result<Self, SolverError> {
        let mut table = Self::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let err = |reason: String| SolverError::Parse { line: lineno, reason };
            let fields: Vec<&str> = line.split('\t').collect();
            let [state, action, value, visits] = fields[..] else {
                return Err(err(format!("expected 4 tab-separated fields, got {}", fields.len())));
            };
            let state: SystemState = state.parse().map_err(err)?;
            if !mdp.is_valid_state(&state) {
                return Err(err(format!("state `{state}` is outside this scenario")));
            }
            let action: OffloadAction = action.parse().map_err(err)?;
            if !mdp.is_admissible(&state, &action) {
                return Err(err(format!("action `{action}` is not admissible in `{state}`")));
            }
            let value: f64 = value.parse().map_err(|_| err(format!("bad value `{value}`")))?;
            let visits: u64 = visits.parse().map_err(|_| err(format!("bad visit count `{visits}`")))?;
            if !value.is_finite() || visits == 0 {
                return Err(err("values must be finite with at least one visit".into()));
            }
            let row = table.states.entry(mdp.state_key(&state)).or_default();
            match row.binary_search_by(|e| e.action.cmp(&action)) {
                Ok(_) => return Err(err(format!("duplicate entry for `{state}` / `{action}`"))),
                Err(i) => row.insert(i, QEntry { action, value, visits }),
            }
        }
        Ok(table)
    }
}
