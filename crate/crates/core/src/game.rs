//! Two-strategy matrix games played on the network, and Fermi imitation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::distributions::RandomSource;
use crate::world::{AgentId, WeightGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    Cooperate,
    Defect,
}

impl Strategy {
    pub fn index(self) -> usize {
        self as usize
    }

    /// Unit-vector form: `[1, 0]` for cooperate, `[0, 1]` for defect.
    pub fn vector(self) -> [f64; 2] {
        match self {
            Strategy::Cooperate => [1.0, 0.0],
            Strategy::Defect => [0.0, 1.0],
        }
    }

    pub fn random(rng: &mut RandomSource) -> Self {
        if rng.uniform() < 0.5 {
            Strategy::Cooperate
        } else {
            Strategy::Defect
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Strategy::Cooperate => "C",
            Strategy::Defect => "D",
        }
    }
}

/// Row = focal strategy, column = opponent strategy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    pub entries: [[f64; 2]; 2],
}

impl PayoffMatrix {
    pub fn payoff(&self, focal: Strategy, opponent: Strategy) -> f64 {
        self.entries[focal.index()][opponent.index()]
    }

    /// `s_i^T M s_j`, spelled out on the vector form.
    pub fn bilinear(&self, focal: Strategy, opponent: Strategy) -> f64 {
        let (a, b) = (focal.vector(), opponent.vector());
        (0..2)
            .flat_map(|i| (0..2).map(move |j| (i, j)))
            .map(|(i, j)| a[i] * self.entries[i][j] * b[j])
            .sum()
    }
}

/// `((1, 1-r), (1+r, 0))`.
pub fn snowdrift(r: f64) -> PayoffMatrix {
    PayoffMatrix {
        entries: [[1.0, 1.0 - r], [1.0 + r, 0.0]],
    }
}

/// `((1, -r), (r, 0))`.
pub fn stag_hunt(r: f64) -> PayoffMatrix {
    PayoffMatrix {
        entries: [[1.0, -r], [r, 0.0]],
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GameKind {
    #[default]
    Snowdrift,
    #[serde(rename = "staghunt")]
    StagHunt,
}

impl GameKind {
    pub fn matrix(self, r: f64) -> PayoffMatrix {
        match self {
            GameKind::Snowdrift => snowdrift(r),
            GameKind::StagHunt => stag_hunt(r),
        }
    }
}

/// Payoff of one node: unweighted sum over its neighbours.
pub fn node_payoff(
    m: &PayoffMatrix,
    focal: Strategy,
    neighbors: impl IntoIterator<Item = Strategy>,
) -> f64 {
    neighbors.into_iter().map(|s| m.payoff(focal, s)).sum()
}

/// Every node's accumulated payoff. Isolated nodes earn 0.
///
/// Panics if a graph node has no strategy.
pub fn accumulate_payoffs(
    graph: &WeightGraph,
    strategies: &BTreeMap<AgentId, Strategy>,
    m: &PayoffMatrix,
) -> BTreeMap<AgentId, f64> {
    graph
        .nodes()
        .map(|i| {
            let u = node_payoff(
                m,
                strategies[&i],
                graph.neighbors(i).iter().map(|(j, _)| strategies[j]),
            );
            (i, u)
        })
        .collect()
}

/// Probability that `i` copies `j`: `1 / (1 + exp((u_i - u_j) / kappa))`.
pub fn fermi_adopt_probability(u_i: f64, u_j: f64, kappa: f64) -> f64 {
    let x = (u_i - u_j) / kappa;
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// One node's imitation decision: pick a neighbour uniformly and copy it with
/// Fermi probability. Returns the node's current strategy when isolated.
pub fn imitate(
    own: Strategy,
    own_payoff: f64,
    neighbors: &[(AgentId, f64)],
    lookup: impl Fn(AgentId) -> (Strategy, f64),
    kappa: f64,
    rng: &mut RandomSource,
) -> Strategy {
    if neighbors.is_empty() {
        return own;
    }
    let (j, _) = neighbors[rng.index(neighbors.len())];
    let (s_j, u_j) = lookup(j);
    if rng.uniform() < fermi_adopt_probability(own_payoff, u_j, kappa) {
        s_j
    } else {
        own
    }
}

/// Synchronous Fermi update: every decision reads the pre-update map.
pub fn strategy_update(
    graph: &WeightGraph,
    strategies: &BTreeMap<AgentId, Strategy>,
    payoffs: &BTreeMap<AgentId, f64>,
    kappa: f64,
    rng: &mut RandomSource,
) -> BTreeMap<AgentId, Strategy> {
    strategies
        .iter()
        .map(|(&i, &s)| {
            let next = imitate(
                s,
                payoffs.get(&i).copied().unwrap_or(0.0),
                graph.neighbors(i),
                |j| (strategies[&j], payoffs[&j]),
                kappa,
                rng,
            );
            (i, next)
        })
        .collect()
}
