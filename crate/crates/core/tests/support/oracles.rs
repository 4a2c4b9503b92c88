//! Brute-force reference implementations, written independently of the
//! library: plain edge lists, triple enumeration, sort-and-sum.

#![allow(dead_code)]

use std::collections::BTreeMap;

/// Undirected simple graph as node count plus edge list over `0..n`.
#[derive(Clone, Debug)]
pub struct EdgeList {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl EdgeList {
    /// Builds from an upper-triangle mask in `(i, j)` order, `i < j`.
    pub fn from_mask(n: usize, mask: &[bool]) -> Self {
        let mut edges = Vec::new();
        let mut bits = mask.iter();
        for i in 0..n {
            for j in i + 1..n {
                if *bits.next().unwrap_or(&false) {
                    edges.push((i, j));
                }
            }
        }
        Self { n, edges }
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.edges
            .iter()
            .any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a))
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(a, b) in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }
}

/// Local clustering by counting closed triples over every node triple.
pub fn clustering(g: &EdgeList) -> (Vec<f64>, f64) {
    let deg = g.degrees();
    let mut per = vec![0.0; g.n];
    for i in 0..g.n {
        if deg[i] < 2 {
            continue;
        }
        let mut closed = 0usize;
        let mut open = 0usize;
        for j in 0..g.n {
            for k in 0..g.n {
                if j == k || j == i || k == i {
                    continue;
                }
                if g.adjacent(i, j) && g.adjacent(i, k) {
                    open += 1;
                    if g.adjacent(j, k) {
                        closed += 1;
                    }
                }
            }
        }
        per[i] = closed as f64 / open as f64;
    }
    let global = if g.n == 0 {
        0.0
    } else {
        per.iter().sum::<f64>() / g.n as f64
    };
    (per, global)
}

/// Joint degree distribution: every edge spreads `1/M` of mass over its two
/// ordered degree pairs.
pub fn joint_degree(g: &EdgeList) -> BTreeMap<(usize, usize), f64> {
    let deg = g.degrees();
    let m = g.edges.len() as f64;
    let mut p = BTreeMap::new();
    for &(a, b) in &g.edges {
        *p.entry((deg[a], deg[b])).or_insert(0.0) += 0.5 / m;
        *p.entry((deg[b], deg[a])).or_insert(0.0) += 0.5 / m;
    }
    p
}

/// Pearson correlation over the `2M` ordered edge-end pairs.
pub fn assortativity(g: &EdgeList) -> Option<f64> {
    let deg = g.degrees();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(a, b) in &g.edges {
        xs.extend([deg[a] as f64, deg[b] as f64]);
        ys.extend([deg[b] as f64, deg[a] as f64]);
    }
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if vx < 1e-12 || vy < 1e-12 {
        return None;
    }
    Some(cov / (vx.sqrt() * vy.sqrt()))
}

/// Sort descending and add the first four.
pub fn top4(counts: &[usize]) -> usize {
    let mut c = counts.to_vec();
    c.sort_unstable_by(|a, b| b.cmp(a));
    c.iter().take(4).sum()
}
