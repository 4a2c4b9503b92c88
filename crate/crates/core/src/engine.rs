//! Simulation driver.
//!
//! A run interleaves continuous-time birth/death events with unit-time
//! synchronous steps. Each step has five phases:
//!
//! 1. every agent picks an action from its Q-table and all moves land at once;
//! 2. edge weights are rewired over the post-move grid;
//! 3. payoffs are accumulated on the new graph;
//! 4. each agent updates the Q entry it just used;
//! 5. strategies are imitated under the Fermi rule.
//!
//! Phases 1, 3, 4 and 5 read a frozen view of the other agents and only write
//! per-agent state, so they run through [`Execution`]. Every agent draws from
//! its own random stream, which keeps parallel and sequential runs identical.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::birth_death::{Event, EventSchedule};
use crate::distributions::{mix_seed, LifetimeDistribution, RandomSource};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::game::{fermi_adopt_probability, node_payoff, GameKind, PayoffMatrix, Strategy};
use crate::learning::{heuristic_exploration, heuristic_step, select_action, Action, QTable};
use crate::metrics;
use crate::world::{on_birth, on_death, update_weights, AgentId, Grid, WeightGraph, WeightParams};

/// Fraction of the horizon averaged into run summaries.
pub const FINAL_WINDOW_FRACTION: f64 = 0.1;

/// What an agent is rewarded with after moving.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Summed payoff of everyone in the agent's post-move cell.
    #[default]
    CellTotal,
    /// The agent's own payoff.
    Own,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub rows: usize,
    pub cols: usize,
    /// Individuals per cell at t = 0. Ignored with birth-death, which starts empty.
    pub initial_per_cell: usize,
    pub birth_death_enabled: bool,
    pub lambda: f64,
    pub lifetime: LifetimeDistribution,
    /// Exploitation rate; exploration is `1 - delta`.
    pub delta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub game: GameKind,
    pub r: f64,
    pub kappa: f64,
    pub beta: f64,
    pub tau: f64,
    pub sigma: f64,
    pub horizon: u64,
    pub seed: u64,
    pub record_every: u64,
    pub snapshot_steps: Vec<u64>,
    pub reward_mode: RewardMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            rows: 10,
            cols: 10,
            initial_per_cell: 3,
            birth_death_enabled: false,
            lambda: 3.0,
            lifetime: LifetimeDistribution::power_law(80.0, 5.0).expect("valid default"),
            delta: 0.9,
            eta: 0.7,
            gamma: 0.3,
            game: GameKind::Snowdrift,
            r: 0.2,
            kappa: 0.1,
            beta: 2.0,
            tau: 1.0,
            sigma: 0.5,
            horizon: 5000,
            seed: 0,
            record_every: 1,
            snapshot_steps: Vec::new(),
            reward_mode: RewardMode::CellTotal,
        }
    }
}

fn in_range(name: &'static str, v: f64, ok: bool, expect: &str) -> Result<()> {
    if ok && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("{v} outside {expect}")))
    }
}

impl SimConfig {
    pub fn weight_params(&self) -> WeightParams {
        WeightParams {
            beta: self.beta,
            tau: self.tau,
            sigma: self.sigma,
        }
    }

    pub fn payoff_matrix(&self) -> PayoffMatrix {
        self.game.matrix(self.r)
    }

    pub fn exploration_rate(&self) -> f64 {
        1.0 - self.delta
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 {
            return Err(Error::param("rows", "must be positive"));
        }
        if self.cols == 0 {
            return Err(Error::param("cols", "must be positive"));
        }
        in_range(
            "delta",
            self.delta,
            (0.0..=1.0).contains(&self.delta),
            "[0, 1]",
        )?;
        in_range("eta", self.eta, self.eta > 0.0 && self.eta <= 1.0, "(0, 1]")?;
        in_range(
            "gamma",
            self.gamma,
            (0.0..1.0).contains(&self.gamma),
            "[0, 1)",
        )?;
        in_range("r", self.r, (0.0..=1.0).contains(&self.r), "[0, 1]")?;
        in_range("kappa", self.kappa, self.kappa > 0.0, "(0, inf)")?;
        in_range("lambda", self.lambda, self.lambda > 0.0, "(0, inf)")?;
        self.weight_params().validate()?;
        if self.record_every == 0 {
            return Err(Error::param("record_every", "must be >= 1"));
        }
        Ok(())
    }
}

/// Movement rule driving phase 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    QLearning,
    /// Greedy neighbour search with exploration `0.99^t`; no learning.
    Heuristic,
}

#[derive(Clone, Debug)]
pub struct Agent {
    pub id: AgentId,
    pub strategy: Strategy,
    pub q: QTable,
    pub payoff: f64,
    rng: RandomSource,
}

impl Agent {
    fn new(id: AgentId, strategy: Strategy, states: usize, seed: u64) -> Self {
        Self {
            id,
            strategy,
            q: QTable::zeros(states),
            payoff: 0.0,
            // stream 0 is the world's
            rng: RandomSource::with_stream(seed, id.0 + 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: u64,
    pub time: f64,
    pub population: usize,
    pub cooperation_fraction: f64,
    pub n_c: usize,
    pub state_transition_ratio: f64,
    pub births: u64,
    pub deaths: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodeRow {
    pub id: AgentId,
    pub row: usize,
    pub col: usize,
    pub strategy: Strategy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub nodes: Vec<NodeRow>,
    pub graph: WeightGraph,
}

impl Snapshot {
    pub fn write_nodes<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "id,row,col,strategy")?;
        for n in &self.nodes {
            writeln!(out, "{},{},{},{}", n.id, n.row, n.col, n.strategy.label())?;
        }
        Ok(())
    }

    pub fn write_edges<W: Write>(&self, out: W) -> io::Result<()> {
        self.graph.write_edge_list(out)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunRecord {
    pub steps: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    pub horizon: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub window_start: u64,
    pub window_end: u64,
    pub mean_population: f64,
    pub mean_cooperation_fraction: f64,
    pub mean_n_c: f64,
    pub mean_transition_ratio: f64,
    pub final_population: usize,
    pub births: u64,
    pub deaths: u64,
}

impl RunRecord {
    /// Steps in the final window, always at least one step long.
    pub fn final_window(&self) -> &[StepRecord] {
        let w = ((self.horizon as f64) * FINAL_WINDOW_FRACTION)
            .round()
            .max(1.0) as u64;
        let start = self.horizon.saturating_sub(w) + 1;
        let first = self.steps.partition_point(|s| s.step < start);
        if first >= self.steps.len() {
            &self.steps[self.steps.len().saturating_sub(1)..]
        } else {
            &self.steps[first..]
        }
    }

    pub fn summary(&self) -> RunSummary {
        let w = self.final_window();
        let n = w.len().max(1) as f64;
        let mean = |f: fn(&StepRecord) -> f64| w.iter().map(f).sum::<f64>() / n;
        let last = self.steps.last();
        RunSummary {
            window_start: w.first().map_or(0, |s| s.step),
            window_end: w.last().map_or(0, |s| s.step),
            mean_population: mean(|s| s.population as f64),
            mean_cooperation_fraction: mean(|s| s.cooperation_fraction),
            mean_n_c: mean(|s| s.n_c as f64),
            mean_transition_ratio: mean(|s| s.state_transition_ratio),
            final_population: last.map_or(0, |s| s.population),
            births: last.map_or(0, |s| s.births),
            deaths: last.map_or(0, |s| s.deaths),
        }
    }

    /// `step,population,coop_fraction,n_c,transition_ratio`
    pub fn write_timeseries<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "step,population,coop_fraction,n_c,transition_ratio")?;
        for s in &self.steps {
            writeln!(
                out,
                "{},{},{},{},{}",
                s.step, s.population, s.cooperation_fraction, s.n_c, s.state_transition_ratio
            )?;
        }
        Ok(())
    }
}

/// Full simulation state.
#[derive(Clone, Debug)]
pub struct Simulation {
    config: SimConfig,
    matrix: PayoffMatrix,
    policy: Policy,
    exec: Execution,
    grid: Grid,
    graph: WeightGraph,
    /// Sorted by id; ids only grow, so births append.
    agents: Vec<Agent>,
    rng: RandomSource,
    schedule: Option<EventSchedule>,
    clock: f64,
    steps_done: u64,
    cell_payoffs: Vec<f64>,
    births: u64,
    deaths: u64,
    record: RunRecord,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        Self::with_policy(config, Policy::QLearning)
    }

    pub fn with_policy(config: SimConfig, policy: Policy) -> Result<Self> {
        config.validate()?;
        let mut rng = RandomSource::new(config.seed);
        let mut grid = Grid::new(config.rows, config.cols)?;
        let states = grid.cell_count();
        let mut agents = Vec::new();
        let schedule = if config.birth_death_enabled {
            Some(EventSchedule::new(0.0, config.lambda, &mut rng))
        } else {
            for cell in 0..states {
                for _ in 0..config.initial_per_cell {
                    let id = AgentId(agents.len() as u64);
                    grid.place(id, cell)?;
                    agents.push(Agent::new(
                        id,
                        Strategy::random(&mut rng),
                        states,
                        config.seed,
                    ));
                }
            }
            None
        };
        let graph = WeightGraph::complete(agents.iter().map(|a| a.id), config.tau);
        let mut sim = Self {
            matrix: config.payoff_matrix(),
            record: RunRecord {
                horizon: config.horizon,
                ..Default::default()
            },
            config,
            policy,
            exec: Execution::default(),
            grid,
            graph,
            agents,
            rng,
            schedule,
            clock: 0.0,
            steps_done: 0,
            cell_payoffs: vec![0.0; states],
            births: 0,
            deaths: 0,
        };
        sim.compute_payoffs();
        sim.refresh_cell_payoffs();
        sim.observe(0.0);
        Ok(sim)
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn graph(&self) -> &WeightGraph {
        &self.graph
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn steps_done(&self) -> u64 {
        self.steps_done
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn record(&self) -> &RunRecord {
        &self.record
    }

    pub fn into_record(self) -> RunRecord {
        self.record
    }

    pub fn agent(&self, id: AgentId) -> Option<&Agent> {
        self.agents
            .binary_search_by_key(&id, |a| a.id)
            .ok()
            .map(|i| &self.agents[i])
    }

    pub fn strategies(&self) -> BTreeMap<AgentId, Strategy> {
        self.agents.iter().map(|a| (a.id, a.strategy)).collect()
    }

    /// Cell payoff totals from the latest payoff phase.
    pub fn cell_payoffs(&self) -> &[f64] {
        &self.cell_payoffs
    }

    pub fn snapshot(&self) -> Snapshot {
        let nodes = self
            .agents
            .iter()
            .map(|a| {
                let (row, col) = self.grid.coords(self.grid.location(a.id).expect("placed"));
                NodeRow {
                    id: a.id,
                    row,
                    col,
                    strategy: a.strategy,
                }
            })
            .collect();
        Snapshot {
            step: self.steps_done,
            nodes,
            graph: self.graph.clone(),
        }
    }

    /// Runs to the horizon and returns the record.
    pub fn run(mut self) -> RunRecord {
        self.run_to_horizon();
        self.record
    }

    /// Advances until the horizon, keeping the final state inspectable.
    pub fn run_to_horizon(&mut self) {
        if self.schedule.is_some() {
            self.run_birth_death();
        } else {
            while self.steps_done < self.config.horizon {
                self.step();
            }
        }
    }

    /// Event loop: apply the next birth or death, then catch up every
    /// integer step the clock has passed.
    fn run_birth_death(&mut self) {
        let horizon = self.config.horizon;
        loop {
            while (self.steps_done as f64) < self.clock && self.steps_done < horizon {
                self.step();
            }
            if self.clock >= horizon as f64 {
                break;
            }
            let schedule = self.schedule.as_mut().expect("birth-death run");
            let event = schedule.advance(self.config.lambda, &self.config.lifetime, &mut self.rng);
            self.clock = event.time();
            self.apply_event(event);
        }
    }

    /// Applies one birth or death to the world immediately.
    pub fn apply_event(&mut self, event: Event) {
        match event {
            Event::Birth { id, .. } => {
                on_birth(
                    &mut self.grid,
                    &mut self.graph,
                    id,
                    self.config.tau,
                    &mut self.rng,
                )
                .expect("fresh id");
                let strategy = Strategy::random(&mut self.rng);
                let states = self.grid.cell_count();
                self.agents
                    .push(Agent::new(id, strategy, states, self.config.seed));
                debug_assert!(self.agents.windows(2).all(|w| w[0].id < w[1].id));
                self.births += 1;
            }
            Event::Death { id, .. } => {
                on_death(&mut self.grid, &mut self.graph, id)
                    .expect("scheduled death of a living individual");
                let i = self
                    .agents
                    .binary_search_by_key(&id, |a| a.id)
                    .expect("agent list in sync with grid");
                self.agents.remove(i);
                self.deaths += 1;
            }
        }
    }

    fn index_of(agents: &[(AgentId, Strategy, f64)], id: AgentId) -> usize {
        agents
            .binary_search_by_key(&id, |&(i, _, _)| i)
            .expect("neighbour is alive")
    }

    fn compute_payoffs(&mut self) {
        let view: Vec<(AgentId, Strategy, f64)> = self
            .agents
            .iter()
            .map(|a| (a.id, a.strategy, 0.0))
            .collect();
        let (graph, m) = (&self.graph, &self.matrix);
        let payoffs = exec::map(self.exec, &self.agents, |a| {
            node_payoff(
                m,
                a.strategy,
                graph
                    .neighbors(a.id)
                    .iter()
                    .map(|&(j, _)| view[Self::index_of(&view, j)].1),
            )
        });
        for (a, u) in self.agents.iter_mut().zip(payoffs) {
            a.payoff = u;
        }
    }

    fn refresh_cell_payoffs(&mut self) {
        self.cell_payoffs.iter_mut().for_each(|c| *c = 0.0);
        for a in &self.agents {
            let cell = self.grid.location(a.id).expect("placed");
            self.cell_payoffs[cell] += a.payoff;
        }
    }

    /// One synchronous unit step.
    pub fn step(&mut self) {
        if self.steps_done == 0 && self.schedule.is_some() {
            // the first cohort starts fully connected, like the fixed-size system
            self.graph = WeightGraph::complete(self.agents.iter().map(|a| a.id), self.config.tau);
        }
        let exec = self.exec;
        let cfg = &self.config;

        // phase 1: choose and move
        let grid = &self.grid;
        let moves: Vec<(usize, Action, usize)> = match self.policy {
            Policy::QLearning => {
                let delta = cfg.delta;
                exec::map_mut(exec, &mut self.agents, |a| {
                    let from = grid.location(a.id).expect("placed");
                    let action = select_action(&a.q, from, delta, &mut a.rng);
                    (from, action, grid.target_cell(from, action, &mut a.rng))
                })
            }
            Policy::Heuristic => {
                let epsilon = heuristic_exploration(self.steps_done);
                let cell_payoffs = &self.cell_payoffs;
                exec::map_mut(exec, &mut self.agents, |a| {
                    let from = grid.location(a.id).expect("placed");
                    let around: Vec<(usize, f64)> = grid
                        .neighbor_cells(from)
                        .into_iter()
                        .map(|c| (c, cell_payoffs[c]))
                        .collect();
                    let to = heuristic_step(from, epsilon, &around, cell_payoffs[from], &mut a.rng);
                    (from, Action::Stay, to)
                })
            }
        };
        let mut moved = 0usize;
        for (a, &(from, _, to)) in self.agents.iter().zip(&moves) {
            if from != to {
                moved += 1;
                self.grid.relocate(a.id, to).expect("placed");
            }
        }
        let transition = if moves.is_empty() {
            0.0
        } else {
            moved as f64 / moves.len() as f64
        };

        // phase 2: rewire
        update_weights(
            &mut self.graph,
            &self.grid,
            &self.config.weight_params(),
            exec,
        );

        // phase 3: play
        self.compute_payoffs();
        self.refresh_cell_payoffs();

        // phase 4: learn
        if self.policy == Policy::QLearning {
            let (eta, gamma, mode) = (self.config.eta, self.config.gamma, self.config.reward_mode);
            let cell_payoffs = &self.cell_payoffs;
            let mut work: Vec<(&mut Agent, (usize, Action, usize))> =
                self.agents.iter_mut().zip(moves.iter().copied()).collect();
            exec::for_each_mut(exec, &mut work, |(a, (from, action, to))| {
                let reward = match mode {
                    RewardMode::CellTotal => cell_payoffs[*to],
                    RewardMode::Own => a.payoff,
                };
                a.q.update(*from, *action, reward, *to, eta, gamma);
            });
        }

        // phase 5: imitate
        let view: Vec<(AgentId, Strategy, f64)> = self
            .agents
            .iter()
            .map(|a| (a.id, a.strategy, a.payoff))
            .collect();
        let (graph, kappa) = (&self.graph, self.config.kappa);
        let next: Vec<Strategy> = exec::map_mut(exec, &mut self.agents, |a| {
            let neighbors = graph.neighbors(a.id);
            if neighbors.is_empty() {
                return a.strategy;
            }
            let (j, _) = neighbors[a.rng.index(neighbors.len())];
            let (_, s_j, u_j) = view[Self::index_of(&view, j)];
            if a.rng.uniform() < fermi_adopt_probability(a.payoff, u_j, kappa) {
                s_j
            } else {
                a.strategy
            }
        });
        for (a, s) in self.agents.iter_mut().zip(next) {
            a.strategy = s;
        }

        self.steps_done += 1;
        self.observe(transition);
    }

    fn observe(&mut self, transition: f64) {
        let step = self.steps_done;
        if step.is_multiple_of(self.config.record_every) || step == self.config.horizon {
            self.record.steps.push(StepRecord {
                step,
                time: if self.schedule.is_some() {
                    self.clock
                } else {
                    step as f64
                },
                population: self.agents.len(),
                cooperation_fraction: metrics::cooperation_fraction(
                    self.agents.iter().map(|a| &a.strategy),
                ),
                n_c: metrics::n_c(&self.grid),
                state_transition_ratio: transition,
                births: self.births,
                deaths: self.deaths,
            });
        }
        if self.config.snapshot_steps.contains(&step) {
            let snap = self.snapshot();
            self.record.snapshots.push(snap);
        }
    }
}

/// Runs the Q-learning model to the horizon.
pub fn run(config: &SimConfig) -> Result<RunRecord> {
    Ok(Simulation::new(config.clone())?.run())
}

/// Same phase structure with the non-learning heuristic movers.
pub fn run_heuristic(config: &SimConfig) -> Result<RunRecord> {
    Ok(Simulation::with_policy(config.clone(), Policy::Heuristic)?.run())
}

/// Seed of replica `i`. Replica 0 reuses the base seed, so a one-replica
/// sweep reproduces a plain run.
pub fn replica_seed(seed: u64, replica: usize) -> u64 {
    if replica == 0 {
        seed
    } else {
        mix_seed(seed, replica as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepCell {
    pub delta: f64,
    pub r: f64,
    pub mean_coop: f64,
    pub mean_nc: f64,
    pub replicas: Vec<RunSummary>,
}

/// `delta` x `r` grid of replicated runs, row-major in `deltas`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub deltas: Vec<f64>,
    pub rs: Vec<f64>,
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    pub fn cell(&self, di: usize, ri: usize) -> &SweepCell {
        &self.cells[di * self.rs.len() + ri]
    }

    /// `table[delta_index][r_index]` of the chosen value.
    pub fn table(&self, f: impl Fn(&SweepCell) -> f64) -> Vec<Vec<f64>> {
        (0..self.deltas.len())
            .map(|di| (0..self.rs.len()).map(|ri| f(self.cell(di, ri))).collect())
            .collect()
    }

    /// `delta,r,mean_coop,mean_nc`
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "delta,r,mean_coop,mean_nc")?;
        for c in &self.cells {
            writeln!(out, "{},{},{},{}", c.delta, c.r, c.mean_coop, c.mean_nc)?;
        }
        Ok(())
    }
}

/// Runs `replicas` seeds per `(delta, r)` cell and averages the final-window
/// cooperation fraction and `N_c`. Jobs are independent, so `exec` only
/// changes wall time.
pub fn sweep(
    template: &SimConfig,
    deltas: &[f64],
    rs: &[f64],
    replicas: usize,
    policy: Policy,
    exec: Execution,
) -> Result<SweepResult> {
    if replicas == 0 {
        return Err(Error::param("replicas", "must be >= 1"));
    }
    if deltas.is_empty() || rs.is_empty() {
        return Err(Error::Empty("sweep grid"));
    }
    let mut jobs = Vec::with_capacity(deltas.len() * rs.len() * replicas);
    for &delta in deltas {
        for &r in rs {
            for k in 0..replicas {
                let cfg = SimConfig {
                    delta,
                    r,
                    seed: replica_seed(template.seed, k),
                    snapshot_steps: Vec::new(),
                    ..template.clone()
                };
                cfg.validate()?;
                jobs.push(cfg);
            }
        }
    }
    let summaries = exec::map(exec, &jobs, |cfg| {
        Simulation::with_policy(cfg.clone(), policy)
            .expect("validated")
            .with_execution(Execution::Sequential)
            .run()
            .summary()
    });
    let cells = summaries
        .chunks(replicas)
        .zip(jobs.chunks(replicas))
        .map(|(sums, cfgs)| {
            let n = sums.len() as f64;
            SweepCell {
                delta: cfgs[0].delta,
                r: cfgs[0].r,
                mean_coop: sums
                    .iter()
                    .map(|s| s.mean_cooperation_fraction)
                    .sum::<f64>()
                    / n,
                mean_nc: sums.iter().map(|s| s.mean_n_c).sum::<f64>() / n,
                replicas: sums.to_vec(),
            }
        })
        .collect();
    Ok(SweepResult {
        deltas: deltas.to_vec(),
        rs: rs.to_vec(),
        cells,
    })
}
