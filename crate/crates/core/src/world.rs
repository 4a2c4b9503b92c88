//! The spatial grid and the co-location weighted network.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::distributions::RandomSource;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::learning::Action;

/// Stable identifier of an individual. Ids are never reused within a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u64);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `rows x cols` lattice; cell index is `row * cols + col`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    positions: BTreeMap<AgentId, usize>,
    occupancy: Vec<BTreeSet<AgentId>>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 {
            return Err(Error::param("rows", "must be positive"));
        }
        if cols == 0 {
            return Err(Error::param("cols", "must be positive"));
        }
        Ok(Self {
            rows,
            cols,
            positions: BTreeMap::new(),
            occupancy: vec![BTreeSet::new(); rows * cols],
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn population(&self) -> usize {
        self.positions.len()
    }

    pub fn cell_index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell / self.cols, cell % self.cols)
    }

    pub fn location(&self, id: AgentId) -> Option<usize> {
        self.positions.get(&id).copied()
    }

    pub fn occupants(&self, cell: usize) -> &BTreeSet<AgentId> {
        &self.occupancy[cell]
    }

    pub fn occupancy_counts(&self) -> Vec<usize> {
        self.occupancy.iter().map(BTreeSet::len).collect()
    }

    pub fn positions(&self) -> &BTreeMap<AgentId, usize> {
        &self.positions
    }

    pub fn place(&mut self, id: AgentId, cell: usize) -> Result<()> {
        if cell >= self.cell_count() {
            return Err(Error::param("cell", format!("{cell} out of range")));
        }
        if self.positions.insert(id, cell).is_some() {
            return Err(Error::DuplicateIndividual(id));
        }
        self.occupancy[cell].insert(id);
        Ok(())
    }

    pub fn remove(&mut self, id: AgentId) -> Result<usize> {
        let cell = self
            .positions
            .remove(&id)
            .ok_or(Error::UnknownIndividual(id))?;
        self.occupancy[cell].remove(&id);
        Ok(cell)
    }

    pub fn relocate(&mut self, id: AgentId, cell: usize) -> Result<()> {
        let old = self.location(id).ok_or(Error::UnknownIndividual(id))?;
        if old != cell {
            self.occupancy[old].remove(&id);
            self.occupancy[cell].insert(id);
            self.positions.insert(id, cell);
        }
        Ok(())
    }

    /// Destination of `action` from `cell`. Off-grid moves stay put.
    pub fn target_cell(&self, cell: usize, action: Action, rng: &mut RandomSource) -> usize {
        let (row, col) = self.coords(cell);
        match action {
            Action::Left if col > 0 => cell - 1,
            Action::Right if col + 1 < self.cols => cell + 1,
            Action::Up if row > 0 => cell - self.cols,
            Action::Down if row + 1 < self.rows => cell + self.cols,
            Action::RandomMove => rng.index(self.cell_count()),
            _ => cell,
        }
    }

    /// The up-to-four edge-adjacent cells, in left/right/up/down order.
    pub fn neighbor_cells(&self, cell: usize) -> Vec<usize> {
        let (row, col) = self.coords(cell);
        let mut out = Vec::with_capacity(4);
        if col > 0 {
            out.push(cell - 1);
        }
        if col + 1 < self.cols {
            out.push(cell + 1);
        }
        if row > 0 {
            out.push(cell - self.cols);
        }
        if row + 1 < self.rows {
            out.push(cell + self.cols);
        }
        out
    }
}

pub fn apply_move(
    grid: &mut Grid,
    id: AgentId,
    action: Action,
    rng: &mut RandomSource,
) -> Result<usize> {
    let from = grid.location(id).ok_or(Error::UnknownIndividual(id))?;
    let to = grid.target_cell(from, action, rng);
    grid.relocate(id, to)?;
    Ok(to)
}

/// Decay factor `beta`, reinforcement `tau` and pruning threshold `sigma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    pub beta: f64,
    pub tau: f64,
    pub sigma: f64,
}

impl Default for WeightParams {
    fn default() -> Self {
        Self {
            beta: 2.0,
            tau: 1.0,
            sigma: 0.5,
        }
    }
}

impl WeightParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", "must be > 1"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", "must be > 0"));
        }
        if !(self.tau >= self.sigma && self.tau.is_finite()) {
            return Err(Error::param("tau", "must be finite and >= sigma"));
        }
        Ok(())
    }
}

/// Symmetric weighted graph over living individuals.
///
/// Each node keeps its neighbours sorted by id; both directions of an edge
/// always carry the same weight.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightGraph {
    adj: BTreeMap<AgentId, Vec<(AgentId, f64)>>,
}

impl WeightGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Complete graph on `ids` with every weight equal to `w`.
    pub fn complete(ids: impl IntoIterator<Item = AgentId>, w: f64) -> Self {
        let ids: BTreeSet<AgentId> = ids.into_iter().collect();
        let adj = ids
            .iter()
            .map(|&i| {
                (
                    i,
                    ids.iter().filter(|&&j| j != i).map(|&j| (j, w)).collect(),
                )
            })
            .collect();
        Self { adj }
    }

    pub fn add_node(&mut self, id: AgentId) {
        self.adj.entry(id).or_default();
    }

    pub fn contains(&self, id: AgentId) -> bool {
        self.adj.contains_key(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.adj.keys().copied()
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, id: AgentId) -> &[(AgentId, f64)] {
        self.adj.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn degree(&self, id: AgentId) -> usize {
        self.neighbors(id).len()
    }

    pub fn weight(&self, i: AgentId, j: AgentId) -> Option<f64> {
        let n = self.neighbors(i);
        n.binary_search_by_key(&j, |&(k, _)| k).ok().map(|p| n[p].1)
    }

    /// Inserts or overwrites edge `{i, j}`. Both endpoints are added as nodes.
    pub fn set_edge(&mut self, i: AgentId, j: AgentId, w: f64) {
        assert_ne!(i, j, "self-edges are not allowed");
        for (a, b) in [(i, j), (j, i)] {
            let list = self.adj.entry(a).or_default();
            match list.binary_search_by_key(&b, |&(k, _)| k) {
                Ok(p) => list[p].1 = w,
                Err(p) => list.insert(p, (b, w)),
            }
        }
    }

    /// Removes a node and all incident edges.
    pub fn remove_node(&mut self, id: AgentId) -> Result<usize> {
        let list = self.adj.remove(&id).ok_or(Error::UnknownIndividual(id))?;
        for &(j, _) in &list {
            if let Some(other) = self.adj.get_mut(&j) {
                if let Ok(p) = other.binary_search_by_key(&id, |&(k, _)| k) {
                    other.remove(p);
                }
            }
        }
        Ok(list.len())
    }

    /// Edges with `i < j`, in id order.
    pub fn edges(&self) -> impl Iterator<Item = (AgentId, AgentId, f64)> + '_ {
        self.adj.iter().flat_map(|(&i, list)| {
            list.iter()
                .filter(move |&&(j, _)| i < j)
                .map(move |&(j, w)| (i, j, w))
        })
    }

    pub fn min_weight(&self) -> Option<f64> {
        self.edges().map(|(_, _, w)| w).reduce(f64::min)
    }

    /// Checks symmetry, absence of self-edges and sorted adjacency.
    pub fn check_invariants(&self) -> bool {
        self.adj.iter().all(|(&i, list)| {
            list.windows(2).all(|w| w[0].0 < w[1].0)
                && list
                    .iter()
                    .all(|&(j, w)| j != i && w > 0.0 && self.weight(j, i) == Some(w))
        })
    }

    pub fn write_edge_list<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "src_id,dst_id,weight")?;
        for (i, j, w) in self.edges() {
            writeln!(out, "{i},{j},{w}")?;
        }
        Ok(())
    }
}

/// Co-location rewiring over the post-move grid.
///
/// Same cell: missing edge becomes `tau`, existing `w` becomes `w/beta + tau`.
/// Different cells: existing `w` becomes `w/beta` and is dropped if below
/// `sigma` (a weight exactly equal to `sigma` is kept).
pub fn update_weights(
    graph: &mut WeightGraph,
    grid: &Grid,
    params: &WeightParams,
    exec: Execution,
) {
    let WeightParams { beta, tau, sigma } = *params;
    let mut lists: Vec<(AgentId, &mut Vec<(AgentId, f64)>)> =
        graph.adj.iter_mut().map(|(&id, l)| (id, l)).collect();
    exec::for_each_mut(exec, &mut lists, |(id, list)| {
        let id = *id;
        let cell = grid.location(id).expect("graph node missing from grid");
        let mut mates = grid
            .occupants(cell)
            .iter()
            .copied()
            .filter(|&j| j != id)
            .peekable();
        let old = std::mem::take(*list);
        let mut merged = Vec::with_capacity(old.len() + grid.occupants(cell).len());
        let mut old = old.into_iter().peekable();
        loop {
            match (old.peek().copied(), mates.peek().copied()) {
                (Some((j, w)), Some(m)) if j == m => {
                    merged.push((j, w / beta + tau));
                    old.next();
                    mates.next();
                }
                (Some((j, w)), Some(m)) if j < m => {
                    let d = w / beta;
                    if d >= sigma {
                        merged.push((j, d));
                    }
                    old.next();
                }
                (_, Some(m)) => {
                    merged.push((m, tau));
                    mates.next();
                }
                (Some((j, w)), None) => {
                    let d = w / beta;
                    if d >= sigma {
                        merged.push((j, d));
                    }
                    old.next();
                }
                (None, None) => break,
            }
        }
        **list = merged;
    });
}

/// Places a newborn uniformly at random and links it to its cellmates.
pub fn on_birth(
    grid: &mut Grid,
    graph: &mut WeightGraph,
    id: AgentId,
    tau: f64,
    rng: &mut RandomSource,
) -> Result<usize> {
    if grid.location(id).is_some() || graph.contains(id) {
        return Err(Error::DuplicateIndividual(id));
    }
    let cell = rng.index(grid.cell_count());
    let mates: Vec<AgentId> = grid.occupants(cell).iter().copied().collect();
    grid.place(id, cell)?;
    graph.add_node(id);
    for j in mates {
        graph.set_edge(id, j, tau);
    }
    Ok(cell)
}

/// Removes an individual and every incident edge. Returns the edges deleted.
pub fn on_death(grid: &mut Grid, graph: &mut WeightGraph, id: AgentId) -> Result<usize> {
    grid.remove(id)?;
    graph.remove_node(id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: u64) -> Vec<AgentId> {
        (0..n).map(AgentId).collect()
    }

    #[test]
    fn moves_and_clamping() {
        let mut g = Grid::new(10, 10).unwrap();
        let mut rng = RandomSource::new(0);
        assert_eq!(g.target_cell(17, Action::Stay, &mut rng), 17);
        assert_eq!(
            g.target_cell(g.cell_index(4, 0), Action::Left, &mut rng),
            g.cell_index(4, 0)
        );
        assert_eq!(
            g.target_cell(g.cell_index(3, 5), Action::Up, &mut rng),
            g.cell_index(2, 5)
        );
        assert_eq!(
            g.target_cell(g.cell_index(9, 9), Action::Down, &mut rng),
            99
        );
        assert_eq!(
            g.target_cell(g.cell_index(9, 9), Action::Right, &mut rng),
            99
        );
        assert_eq!(g.target_cell(g.cell_index(0, 3), Action::Up, &mut rng), 3);
        g.place(AgentId(1), 0).unwrap();
        assert_eq!(
            apply_move(&mut g, AgentId(1), Action::Right, &mut rng).unwrap(),
            1
        );
        assert_eq!(g.location(AgentId(1)), Some(1));
        assert!(g.occupants(0).is_empty());
    }

    #[test]
    fn random_move_covers_grid() {
        let g = Grid::new(3, 4).unwrap();
        let mut rng = RandomSource::new(9);
        let mut seen = BTreeSet::new();
        for _ in 0..2000 {
            seen.insert(g.target_cell(5, Action::RandomMove, &mut rng));
        }
        assert_eq!(seen.len(), 12);
    }

    fn two_agent_world(same_cell: bool, w: Option<f64>) -> (Grid, WeightGraph) {
        let mut grid = Grid::new(2, 2).unwrap();
        grid.place(AgentId(0), 0).unwrap();
        grid.place(AgentId(1), if same_cell { 0 } else { 3 })
            .unwrap();
        let mut graph = WeightGraph::new();
        graph.add_node(AgentId(0));
        graph.add_node(AgentId(1));
        if let Some(w) = w {
            graph.set_edge(AgentId(0), AgentId(1), w);
        }
        (grid, graph)
    }

    #[test]
    fn weight_rules() {
        let p = WeightParams {
            beta: 2.0,
            tau: 1.0,
            sigma: 0.6,
        };
        let (grid, mut graph) = two_agent_world(true, None);
        update_weights(&mut graph, &grid, &p, Execution::Sequential);
        assert_eq!(graph.weight(AgentId(0), AgentId(1)), Some(1.0));

        let (grid, mut graph) = two_agent_world(false, Some(1.0));
        update_weights(&mut graph, &grid, &p, Execution::Sequential);
        assert_eq!(graph.weight(AgentId(0), AgentId(1)), None);

        let (grid, mut graph) = two_agent_world(true, Some(1.0));
        update_weights(&mut graph, &grid, &p, Execution::Sequential);
        assert_eq!(graph.weight(AgentId(0), AgentId(1)), Some(1.5));

        let (grid, mut graph) = two_agent_world(false, None);
        update_weights(&mut graph, &grid, &p, Execution::Sequential);
        assert_eq!(graph.edge_count(), 0);
    }

    #[test]
    fn threshold_equality_keeps_edge() {
        let p = WeightParams::default();
        let (grid, mut graph) = two_agent_world(false, Some(1.0));
        update_weights(&mut graph, &grid, &p, Execution::Sequential);
        assert_eq!(graph.weight(AgentId(0), AgentId(1)), Some(0.5));
        update_weights(&mut graph, &grid, &p, Execution::Sequential);
        assert_eq!(graph.edge_count(), 0);
    }

    #[test]
    fn geometric_decay_without_reinforcement() {
        let p = WeightParams {
            beta: 1.5,
            tau: 1.0,
            sigma: 1e-3,
        };
        let w0 = 7.0;
        let (grid, mut graph) = two_agent_world(false, Some(w0));
        let mut expected = w0;
        for k in 1..=10 {
            update_weights(&mut graph, &grid, &p, Execution::Sequential);
            expected /= 1.5;
            let w = graph.weight(AgentId(0), AgentId(1)).unwrap();
            assert!((w - w0 / 1.5f64.powi(k)).abs() < 1e-12);
            assert_eq!(w, expected);
        }
    }

    #[test]
    fn births_link_to_cellmates() {
        let mut grid = Grid::new(1, 1).unwrap();
        let mut graph = WeightGraph::new();
        let mut rng = RandomSource::new(4);
        for id in ids(3) {
            on_birth(&mut grid, &mut graph, id, 1.0, &mut rng).unwrap();
        }
        let new_edges_before = graph.edge_count();
        on_birth(&mut grid, &mut graph, AgentId(3), 2.0, &mut rng).unwrap();
        assert_eq!(graph.edge_count() - new_edges_before, 3);
        for j in ids(3) {
            assert_eq!(graph.weight(AgentId(3), j), Some(2.0));
        }

        let mut grid = Grid::new(10, 10).unwrap();
        let mut graph = WeightGraph::new();
        on_birth(&mut grid, &mut graph, AgentId(0), 1.0, &mut rng).unwrap();
        assert_eq!(graph.edge_count(), 0);
        assert!(on_birth(&mut grid, &mut graph, AgentId(0), 1.0, &mut rng).is_err());
    }

    #[test]
    fn births_are_deterministic() {
        let place = |seed| {
            let mut grid = Grid::new(10, 10).unwrap();
            let mut graph = WeightGraph::new();
            let mut rng = RandomSource::new(seed);
            (0..2)
                .map(|i| on_birth(&mut grid, &mut graph, AgentId(i), 1.0, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(place(42), place(42));
    }

    #[test]
    fn deaths_remove_incident_edges_only() {
        let mut grid = Grid::new(2, 2).unwrap();
        for i in 0..5 {
            grid.place(AgentId(i), (i % 4) as usize).unwrap();
        }
        // star centred on 0, plus an isolated node 4
        let mut graph = WeightGraph::new();
        for i in 1..4 {
            graph.set_edge(AgentId(0), AgentId(i), 1.0);
        }
        graph.add_node(AgentId(4));
        assert_eq!(on_death(&mut grid, &mut graph, AgentId(4)).unwrap(), 0);
        assert_eq!(graph.edge_count(), 3);
        assert_eq!(on_death(&mut grid, &mut graph, AgentId(0)).unwrap(), 3);
        assert_eq!(graph.edge_count(), 0);
        assert_eq!(grid.population(), 3);
        assert!(graph.check_invariants());
        assert_eq!(
            on_death(&mut grid, &mut graph, AgentId(0)),
            Err(Error::UnknownIndividual(AgentId(0)))
        );
    }

    #[test]
    fn complete_graph_and_edge_export() {
        let g = WeightGraph::complete(ids(4), 1.0);
        assert_eq!(g.edge_count(), 6);
        assert!(g.check_invariants());
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert_eq!(text.lines().nth(1), Some("0,1,1"));
    }

    #[test]
    fn rejects_bad_weight_params() {
        assert!(WeightParams {
            beta: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(WeightParams {
            tau: 0.1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(WeightParams::default().validate().is_ok());
    }
}
