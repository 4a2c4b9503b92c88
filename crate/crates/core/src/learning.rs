//! Tabular Q-learning over grid cells, and the greedy-neighbour heuristic.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::distributions::RandomSource;

pub const ACTION_COUNT: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Left,
    Right,
    Up,
    Down,
    Stay,
    /// Teleport to a uniformly random cell.
    RandomMove,
}

impl Action {
    pub const ALL: [Action; ACTION_COUNT] = [
        Action::Left,
        Action::Right,
        Action::Up,
        Action::Down,
        Action::Stay,
        Action::RandomMove,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }
}

/// `states x 6` utility table, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    states: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(states: usize) -> Self {
        Self {
            states,
            values: vec![0.0; states * ACTION_COUNT],
        }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * ACTION_COUNT..(state + 1) * ACTION_COUNT]
    }

    pub fn row_mut(&mut self, state: usize) -> &mut [f64] {
        &mut self.values[state * ACTION_COUNT..(state + 1) * ACTION_COUNT]
    }

    pub fn get(&self, state: usize, action: Action) -> f64 {
        self.values[state * ACTION_COUNT + action.index()]
    }

    pub fn set(&mut self, state: usize, action: Action, v: f64) {
        self.values[state * ACTION_COUNT + action.index()] = v;
    }

    pub fn max_value(&self, state: usize) -> f64 {
        self.row(state)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Greedy action; exact ties are broken uniformly at random.
    pub fn greedy(&self, state: usize, rng: &mut RandomSource) -> Action {
        let row = self.row(state);
        let best = self.max_value(state);
        let ties = row.iter().filter(|&&v| v == best).count();
        let pick = if ties == 1 { 0 } else { rng.index(ties) };
        let i = row
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v == best)
            .nth(pick)
            .map(|(i, _)| i)
            .unwrap_or(0);
        Action::ALL[i]
    }

    /// One Q-learning step on entry `(state, action)`.
    ///
    /// The lookahead max is read before the write, so a self-transition sees
    /// the pre-update row.
    pub fn update(
        &mut self,
        state: usize,
        action: Action,
        reward: f64,
        next: usize,
        eta: f64,
        gamma: f64,
    ) {
        let max_next = self.max_value(next);
        let old = self.get(state, action);
        self.set(
            state,
            action,
            q_target_update(old, reward, max_next, eta, gamma),
        );
    }

    /// `state_index,left,right,up,down,stay,random_move` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "state_index,left,right,up,down,stay,random_move")?;
        for s in 0..self.states {
            write!(out, "{s}")?;
            for v in self.row(s) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// `old + eta * (reward + gamma * max_next - old)`.
pub fn q_target_update(old: f64, reward: f64, max_next: f64, eta: f64, gamma: f64) -> f64 {
    old + eta * (reward + gamma * max_next - old)
}

/// Epsilon-greedy with exploitation probability `delta`: greedy with
/// probability `delta`, otherwise any of the six actions uniformly.
pub fn select_action(q: &QTable, state: usize, delta: f64, rng: &mut RandomSource) -> Action {
    if rng.uniform() < delta {
        q.greedy(state, rng)
    } else {
        Action::ALL[rng.index(ACTION_COUNT)]
    }
}

pub fn q_update(
    q: &mut QTable,
    s: usize,
    a: Action,
    reward: f64,
    s_next: usize,
    eta: f64,
    gamma: f64,
) {
    q.update(s, a, reward, s_next, eta, gamma);
}

/// Per-step decay of the heuristic agents' exploration rate.
pub const HEURISTIC_DECAY: f64 = 0.99;

/// Exploration rate after `step` steps, starting from 1.
pub fn heuristic_exploration(step: u64) -> f64 {
    HEURISTIC_DECAY.powi(step.min(i32::MAX as u64) as i32)
}

/// With probability `epsilon`, look at the neighbouring cells and move to the
/// best one if it pays strictly more than staying. Ties among the best
/// neighbours are broken uniformly.
pub fn heuristic_step(
    location: usize,
    epsilon: f64,
    neighbor_payoffs: &[(usize, f64)],
    current_payoff: f64,
    rng: &mut RandomSource,
) -> usize {
    if rng.uniform() >= epsilon || neighbor_payoffs.is_empty() {
        return location;
    }
    let best = neighbor_payoffs
        .iter()
        .map(|&(_, p)| p)
        .fold(f64::NEG_INFINITY, f64::max);
    if best <= current_payoff {
        return location;
    }
    let ties: Vec<usize> = neighbor_payoffs
        .iter()
        .filter(|&&(_, p)| p == best)
        .map(|&(c, _)| c)
        .collect();
    if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.index(ties.len())]
    }
}
