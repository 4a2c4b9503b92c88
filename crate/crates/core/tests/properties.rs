mod support;

use std::collections::BTreeMap;

use proptest::prelude::*;

use coevonet::birth_death::{limiting_pmf, steady_state_moments, Event, EventSchedule};
use coevonet::distributions::{LifetimeDistribution, RandomSource};
use coevonet::engine::{SimConfig, Simulation};
use coevonet::game::{fermi_adopt_probability, snowdrift, stag_hunt, Strategy as Play};
use coevonet::learning::{q_target_update, Action, QTable};
use coevonet::metrics::{
    assortativity, clustering_coefficient, cosine, joint_degree_distribution, js_divergence,
    kl_divergence, n_c, pearson, top_k_sum, Topology,
};
use coevonet::world::{update_weights, AgentId, Grid, WeightGraph, WeightParams};
use coevonet::Execution;

use support::oracles::{self, EdgeList};

fn graph() -> impl Strategy<Value = EdgeList> {
    (1usize..=12).prop_flat_map(|n| {
        prop::collection::vec(any::<bool>(), n * (n - 1) / 2)
            .prop_map(move |mask| EdgeList::from_mask(n, &mask))
    })
}

fn topology(g: &EdgeList) -> Topology {
    let mut t = Topology::default();
    for v in 0..g.n {
        t.add_node(v as u64);
    }
    for &(a, b) in &g.edges {
        t.add_edge(a as u64, b as u64);
    }
    t
}

fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, len).prop_filter_map("all zero", |v| {
        let s: f64 = v.iter().sum();
        (s > 1e-6).then(|| v.iter().map(|x| x / s).collect())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn clustering_matches_triple_enumeration(g in graph()) {
        let c = clustering_coefficient(&topology(&g));
        let (per, global) = oracles::clustering(&g);
        for (v, want) in per.iter().enumerate() {
            prop_assert!((c.per_node[&(v as u64)] - want).abs() <= 1e-9);
        }
        prop_assert!((c.global - global).abs() <= 1e-9);
        prop_assert!((0.0..=1.0).contains(&c.global));
    }

    #[test]
    fn joint_degree_matches_edge_spread(g in graph()) {
        let t = topology(&g);
        match joint_degree_distribution(&t) {
            Err(_) => prop_assert!(g.edges.is_empty()),
            Ok(p) => {
                let want = oracles::joint_degree(&g);
                prop_assert_eq!(p.entries.len(), want.len());
                for (&(j, k), &w) in &want {
                    prop_assert!((p.get(j, k) - w).abs() <= 1e-9);
                    prop_assert!((p.get(j, k) - p.get(k, j)).abs() <= 1e-12);
                }
                prop_assert!((p.total() - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn assortativity_matches_pearson_over_edge_ends(g in graph()) {
        let got = assortativity(&topology(&g));
        match (got, oracles::assortativity(&g)) {
            (Some(a), Some(b)) => {
                prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
                prop_assert!((-1.0..=1.0).contains(&a));
            }
            (None, None) => {}
            (a, b) => prop_assert!(false, "definedness differs: {:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn n_c_matches_sort_and_sum(cells in prop::collection::vec(0usize..6, 1..40), rows in 1usize..5, cols in 1usize..5) {
        let mut grid = Grid::new(rows, cols).unwrap();
        for (i, c) in cells.iter().enumerate() {
            grid.place(AgentId(i as u64), c % (rows * cols)).unwrap();
        }
        let counts = grid.occupancy_counts();
        prop_assert_eq!(n_c(&grid), oracles::top4(&counts));
        let mut reversed = counts.clone();
        reversed.reverse();
        prop_assert_eq!(top_k_sum(&reversed, 4), n_c(&grid));
        prop_assert!(n_c(&grid) <= cells.len());
    }

    #[test]
    fn q_update_matches_closed_form(
        old in -50.0f64..50.0, reward in -50.0f64..50.0, next in prop::collection::vec(-50.0f64..50.0, 6),
        eta in 0.001f64..=1.0, gamma in 0.0f64..0.999, a in 0usize..6,
    ) {
        let mut q = QTable::zeros(2);
        q.row_mut(1).copy_from_slice(&next);
        let action = Action::from_index(a).unwrap();
        q.set(0, action, old);
        q.update(0, action, reward, 1, eta, gamma);
        let max_next = next.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let want = (1.0 - eta) * old + eta * (reward + gamma * max_next);
        prop_assert!((q.get(0, action) - want).abs() <= 1e-9 * (1.0 + want.abs()));
        prop_assert_eq!(q_target_update(old, reward, max_next, eta, gamma), q.get(0, action));
        for b in Action::ALL {
            if b != action {
                prop_assert_eq!(q.get(0, b), 0.0);
            }
        }
    }

    #[test]
    fn fermi_complement(a in -1e3f64..1e3, b in -1e3f64..1e3, kappa in 1e-3f64..10.0) {
        let s = fermi_adopt_probability(a, b, kappa) + fermi_adopt_probability(b, a, kappa);
        prop_assert!((s - 1.0).abs() <= 1e-12);
        let p = fermi_adopt_probability(a, b, kappa);
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn payoff_matrices_are_bilinear(r in 0.0f64..=1.0) {
        for m in [snowdrift(r), stag_hunt(r)] {
            for x in [Play::Cooperate, Play::Defect] {
                for y in [Play::Cooperate, Play::Defect] {
                    prop_assert_eq!(m.payoff(x, y), m.bilinear(x, y));
                }
            }
        }
    }

    #[test]
    fn divergences(p in distribution(6), q in distribution(6)) {
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() <= 1e-9);
        prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        let js = js_divergence(&p, &q).unwrap();
        prop_assert!((js - js_divergence(&q, &p).unwrap()).abs() <= 1e-12);
        prop_assert!((0.0..=std::f64::consts::LN_2 + 1e-12).contains(&js));
        let c = cosine(&p, &q).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&c));
        if let Ok(r) = pearson(&p, &q) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weight_rule_matches_pairwise_oracle(
        cells in prop::collection::vec(0usize..4, 2..10),
        moved in prop::collection::vec(0usize..4, 2..10),
        steps in 1usize..5,
    ) {
        let params = WeightParams::default();
        let n = cells.len().min(moved.len());
        let ids: Vec<AgentId> = (0..n as u64).map(AgentId).collect();
        let mut grid = Grid::new(2, 2).unwrap();
        for (i, &c) in ids.iter().zip(&cells) {
            grid.place(*i, c).unwrap();
        }
        let mut graph = WeightGraph::complete(ids.iter().copied(), params.tau);
        let mut want: BTreeMap<(u64, u64), f64> = BTreeMap::new();
        for a in 0..n as u64 {
            for b in a + 1..n as u64 {
                want.insert((a, b), params.tau);
            }
        }
        for s in 0..steps {
            if s == 1 {
                for (i, &c) in ids.iter().zip(&moved) {
                    grid.relocate(*i, c).unwrap();
                }
            }
            update_weights(&mut graph, &grid, &params, Execution::Sequential);
            for a in 0..n as u64 {
                for b in a + 1..n as u64 {
                    let same = grid.location(AgentId(a)) == grid.location(AgentId(b));
                    let w = want.get(&(a, b)).copied();
                    let next = match (same, w) {
                        (true, None) => Some(params.tau),
                        (true, Some(w)) => Some(w / params.beta + params.tau),
                        (false, Some(w)) if w / params.beta >= params.sigma => Some(w / params.beta),
                        (false, _) => None,
                    };
                    match next {
                        Some(v) => { want.insert((a, b), v); }
                        None => { want.remove(&(a, b)); }
                    }
                }
            }
            prop_assert!(graph.check_invariants());
            prop_assert_eq!(graph.edge_count(), want.len());
            for (&(a, b), &w) in &want {
                prop_assert_eq!(graph.weight(AgentId(a), AgentId(b)), Some(w));
                prop_assert_eq!(graph.weight(AgentId(b), AgentId(a)), Some(w));
            }
        }
    }

    #[test]
    fn event_schedule_is_chronological(seed in any::<u64>(), lambda in 0.2f64..5.0) {
        let dist = LifetimeDistribution::uniform(1.0, 4.0).unwrap();
        let mut rng = RandomSource::new(seed);
        let mut sched = EventSchedule::new(0.0, lambda, &mut rng);
        let (mut last, mut alive) = (0.0, 0i64);
        for _ in 0..300 {
            let e = sched.advance(lambda, &dist, &mut rng);
            prop_assert!(e.time() >= last);
            last = e.time();
            alive += match e { Event::Birth { .. } => 1, Event::Death { .. } => -1 };
            prop_assert!(alive >= 0);
            prop_assert_eq!(alive as usize, sched.pending());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn recorded_n_c_is_top_four_each_step(seed in any::<u64>(), bd in any::<bool>()) {
        let cfg = SimConfig {
            rows: 4, cols: 5, initial_per_cell: 2, horizon: 40, seed,
            birth_death_enabled: bd, lambda: 1.5,
            lifetime: LifetimeDistribution::exponential(0.1).unwrap(),
            ..Default::default()
        };
        let mut sim = Simulation::new(cfg).unwrap();
        if bd {
            sim.run_to_horizon();
            for s in &sim.record().steps {
                prop_assert_eq!(s.population as u64, s.births - s.deaths);
                prop_assert!(s.n_c <= s.population);
            }
        } else {
            for _ in 0..40 {
                sim.step();
                let counts = sim.grid().occupancy_counts();
                let last = sim.record().steps.last().unwrap();
                prop_assert_eq!(last.n_c, oracles::top4(&counts));
                prop_assert!((0.0..=1.0).contains(&last.cooperation_fraction));
                prop_assert!((0.0..=1.0).contains(&last.state_transition_ratio));
                prop_assert!(sim.graph().min_weight().is_none_or(|w| w >= 0.5));
            }
        }
    }

    #[test]
    fn execution_mode_does_not_change_results(seed in any::<u64>()) {
        let cfg = SimConfig { rows: 3, cols: 3, initial_per_cell: 3, horizon: 25, seed, ..Default::default() };
        let a = Simulation::new(cfg.clone()).unwrap().with_execution(Execution::Sequential).run();
        let b = Simulation::new(cfg).unwrap().with_execution(Execution::Parallel).run();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn limiting_pmf_normalizes_and_matches_moments() {
    for dist in [
        LifetimeDistribution::power_law(60.0, 3.0).unwrap(),
        LifetimeDistribution::uniform(120.0, 150.0).unwrap(),
    ] {
        let m = steady_state_moments(2.0, &dist);
        let total: f64 = (0..2000).map(|i| limiting_pmf(2.0, &dist, i)).sum();
        assert!((total - 1.0).abs() < 1e-9);
        let mean: f64 = (0..2000)
            .map(|i| i as f64 * limiting_pmf(2.0, &dist, i))
            .sum();
        assert!((mean - m.mean).abs() < 1e-6);
    }
}
