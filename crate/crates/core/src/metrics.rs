//! Network structure metrics, distribution distances and occupancy
//! summaries.
//!
//! Structural metrics work on [`Topology`], an unweighted simple graph that
//! can be built from a simulation [`WeightGraph`] or from any external edge
//! list.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::Strategy;
use crate::world::{AgentId, Grid, WeightGraph};

/// Simple undirected graph; weights and self-loops are dropped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Topology {
    adj: BTreeMap<u64, BTreeSet<u64>>,
}

impl Topology {
    pub fn from_edges(edges: impl IntoIterator<Item = (u64, u64)>) -> Self {
        let mut t = Topology::default();
        for (a, b) in edges {
            t.add_edge(a, b);
        }
        t
    }

    pub fn add_node(&mut self, v: u64) {
        self.adj.entry(v).or_default();
    }

    pub fn add_edge(&mut self, a: u64, b: u64) {
        if a == b {
            self.add_node(a);
            return;
        }
        self.adj.entry(a).or_default().insert(b);
        self.adj.entry(b).or_default().insert(a);
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    pub fn degree(&self, v: u64) -> usize {
        self.adj.get(&v).map_or(0, BTreeSet::len)
    }

    pub fn neighbors(&self, v: u64) -> impl Iterator<Item = u64> + '_ {
        self.adj.get(&v).into_iter().flatten().copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = u64> + '_ {
        self.adj.keys().copied()
    }

    /// Each edge once, with `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.adj
            .iter()
            .flat_map(|(&a, ns)| ns.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
    }

    pub fn has_edge(&self, a: u64, b: u64) -> bool {
        self.adj.get(&a).is_some_and(|ns| ns.contains(&b))
    }
}

impl From<&WeightGraph> for Topology {
    fn from(g: &WeightGraph) -> Self {
        let mut t = Topology::default();
        for AgentId(v) in g.nodes() {
            t.add_node(v);
        }
        for (i, j, _) in g.edges() {
            t.add_edge(i.0, j.0);
        }
        t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Clustering {
    pub per_node: BTreeMap<u64, f64>,
    pub global: f64,
}

impl Clustering {
    /// Counts of per-node coefficients in `bins` equal-width bins over `[0, 1]`.
    pub fn histogram(&self, bins: usize) -> Vec<usize> {
        let mut h = vec![0; bins.max(1)];
        let last = h.len() - 1;
        for &c in self.per_node.values() {
            let b = ((c * h.len() as f64) as usize).min(last);
            h[b] += 1;
        }
        h
    }
}

/// `C_i = 2 E_i / (k_i (k_i - 1))`, with `C_i = 0` when `k_i < 2`. The global
/// value is the plain mean over all nodes (0 for an empty graph).
pub fn clustering_coefficient(g: &Topology) -> Clustering {
    let per_node: BTreeMap<u64, f64> = g
        .nodes()
        .map(|v| {
            let ns: Vec<u64> = g.neighbors(v).collect();
            let k = ns.len();
            if k < 2 {
                return (v, 0.0);
            }
            let mut links = 0usize;
            for (x, &a) in ns.iter().enumerate() {
                for &b in &ns[x + 1..] {
                    if g.has_edge(a, b) {
                        links += 1;
                    }
                }
            }
            (v, 2.0 * links as f64 / (k * (k - 1)) as f64)
        })
        .collect();
    let global = if per_node.is_empty() {
        0.0
    } else {
        per_node.values().sum::<f64>() / per_node.len() as f64
    };
    Clustering { per_node, global }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DegreeDistribution {
    pub support: Vec<usize>,
    pub probs: Vec<f64>,
}

pub fn degree_distribution(g: &Topology) -> Result<DegreeDistribution> {
    if g.node_count() == 0 {
        return Err(Error::Empty("graph"));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for v in g.nodes() {
        *counts.entry(g.degree(v)).or_default() += 1;
    }
    let n = g.node_count() as f64;
    Ok(DegreeDistribution {
        support: counts.keys().copied().collect(),
        probs: counts.values().map(|&c| c as f64 / n).collect(),
    })
}

/// `P(j, k) = m(j, k) mu(j, k) / (2M)`, stored for both orderings `(j, k)`
/// and `(k, j)` so the whole table sums to one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JointDegreeDistribution {
    pub entries: BTreeMap<(usize, usize), f64>,
}

impl JointDegreeDistribution {
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.entries.get(&(j, k)).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }
}

pub fn joint_degree_distribution(g: &Topology) -> Result<JointDegreeDistribution> {
    let m = g.edge_count();
    if m == 0 {
        return Err(Error::EdgelessGraph);
    }
    let mut pair_counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (a, b) in g.edges() {
        let (da, db) = (g.degree(a), g.degree(b));
        *pair_counts.entry((da.min(db), da.max(db))).or_default() += 1;
    }
    let mut entries = BTreeMap::new();
    for ((j, k), count) in pair_counts {
        let mu = if j == k { 2.0 } else { 1.0 };
        let p = count as f64 * mu / (2.0 * m as f64);
        entries.insert((j, k), p);
        if j != k {
            entries.insert((k, j), p);
        }
    }
    Ok(JointDegreeDistribution { entries })
}

/// Degree assortativity: Pearson correlation of the degrees at the two ends
/// of an edge, counting each edge in both directions. `None` when undefined
/// (no edges, or every edge end has the same degree).
pub fn assortativity(g: &Topology) -> Option<f64> {
    let m = g.edge_count();
    if m == 0 {
        return None;
    }
    let (mut sjk, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (a, b) in g.edges() {
        let (j, k) = (g.degree(a) as f64, g.degree(b) as f64);
        sjk += j * k;
        s1 += 0.5 * (j + k);
        s2 += 0.5 * (j * j + k * k);
    }
    let inv = 1.0 / m as f64;
    let mean = s1 * inv;
    let num = sjk * inv - mean * mean;
    let den = s2 * inv - mean * mean;
    if den.abs() <= 1e-12 * (s2 * inv).max(1.0) {
        return None;
    }
    Some((num / den).clamp(-1.0, 1.0))
}

/// Additive smoothing applied before KL and JS.
pub const KL_SMOOTHING: f64 = 1e-10;

fn check_lengths(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    if p.is_empty() {
        return Err(Error::Empty("distribution"));
    }
    Ok(())
}

fn smoothed(p: &[f64]) -> Vec<f64> {
    let total: f64 = p.iter().map(|&x| x + KL_SMOOTHING).sum();
    p.iter().map(|&x| (x + KL_SMOOTHING) / total).collect()
}

fn raw_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).ln())
        .sum::<f64>()
        .max(0.0)
}

/// `sum p_i ln(p_i / q_i)` after smoothing both sides.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    check_lengths(p, q)?;
    Ok(raw_kl(&smoothed(p), &smoothed(q)))
}

/// `KL(p || m) / 2 + KL(q || m) / 2` with `m` the midpoint, after smoothing.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    check_lengths(p, q)?;
    let (p, q) = (smoothed(p), smoothed(q));
    let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok(0.5 * raw_kl(&p, &m) + 0.5 * raw_kl(&q, &m))
}

/// Pearson correlation of the two vectors. `NaN` if either is constant.
pub fn pearson(p: &[f64], q: &[f64]) -> Result<f64> {
    check_lengths(p, q)?;
    let n = p.len() as f64;
    let mp = p.iter().sum::<f64>() / n;
    let mq = q.iter().sum::<f64>() / n;
    let (mut cov, mut vp, mut vq) = (0.0, 0.0, 0.0);
    for (&a, &b) in p.iter().zip(q) {
        cov += (a - mp) * (b - mq);
        vp += (a - mp) * (a - mp);
        vq += (b - mq) * (b - mq);
    }
    Ok((cov / (vp.sqrt() * vq.sqrt())).clamp(-1.0, 1.0))
}

pub fn cosine(p: &[f64], q: &[f64]) -> Result<f64> {
    check_lengths(p, q)?;
    let dot: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
    let np = p.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nq = q.iter().map(|b| b * b).sum::<f64>().sqrt();
    Ok(dot / (np * nq))
}

/// Pads two sparse distributions to the union of their supports.
pub fn align(p: &BTreeMap<i64, f64>, q: &BTreeMap<i64, f64>) -> (Vec<i64>, Vec<f64>, Vec<f64>) {
    let support: BTreeSet<i64> = p.keys().chain(q.keys()).copied().collect();
    let a = support
        .iter()
        .map(|k| p.get(k).copied().unwrap_or(0.0))
        .collect();
    let b = support
        .iter()
        .map(|k| q.get(k).copied().unwrap_or(0.0))
        .collect();
    (support.into_iter().collect(), a, b)
}

/// All four distances between a pair of aligned distributions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DistributionDistances {
    pub kl: f64,
    pub js: f64,
    pub pearson: f64,
    pub cosine: f64,
}

pub fn distribution_distances(p: &[f64], q: &[f64]) -> Result<DistributionDistances> {
    Ok(DistributionDistances {
        kl: kl_divergence(p, q)?,
        js: js_divergence(p, q)?,
        pearson: pearson(p, q)?,
        cosine: cosine(p, q)?,
    })
}

/// Sum of the `k` largest entries (all of them if there are fewer).
pub fn top_k_sum(counts: &[usize], k: usize) -> usize {
    let mut c = counts.to_vec();
    let k = k.min(c.len());
    if k == 0 {
        return 0;
    }
    c.select_nth_unstable_by(k - 1, |a, b| b.cmp(a));
    c[..k].iter().sum()
}

/// Individuals in the four most populated cells.
pub fn n_c(grid: &Grid) -> usize {
    top_k_sum(&grid.occupancy_counts(), 4)
}

/// Share of cooperators; 0 for an empty population.
pub fn cooperation_fraction<'a>(strategies: impl IntoIterator<Item = &'a Strategy>) -> f64 {
    let (mut n, mut c) = (0usize, 0usize);
    for s in strategies {
        n += 1;
        if *s == Strategy::Cooperate {
            c += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        c as f64 / n as f64
    }
}

/// Share of individuals present in both maps whose cell changed.
pub fn state_transition_ratio(
    prev: &BTreeMap<AgentId, usize>,
    next: &BTreeMap<AgentId, usize>,
) -> f64 {
    let (mut n, mut moved) = (0usize, 0usize);
    for (id, &cell) in next {
        if let Some(&before) = prev.get(id) {
            n += 1;
            if before != cell {
                moved += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        moved as f64 / n as f64
    }
}
