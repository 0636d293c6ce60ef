//! Gaussian elimination of weighted graph Laplacians using only sums and
//! products of positive numbers.
//!
//! Eliminating vertex `i` with current neighbour weights `w_ij` and degree
//! `W_i = sum_j w_ij` adds `w_ij w_ik / W_i` to the edge `jk` and
//! `w_ij^2 / W_i` to the self-loop mass of `j`. Degrees are always recomputed
//! as sums of off-diagonal weights, never as differences, so the reduced
//! weights keep full relative accuracy even when conductances span dozens of
//! orders of magnitude.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use crate::error::{Error, Result};

/// Symmetric nonnegative edge weights without self-loops.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedGraph {
    adj: Vec<BTreeMap<u32, f64>>,
}

impl WeightedGraph {
    pub fn new(n: usize) -> Self {
        WeightedGraph { adj: vec![BTreeMap::new(); n] }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    /// Adds `w` to the weight of `{i, j}`; zero weights and loops are ignored.
    pub fn add_edge(&mut self, i: usize, j: usize, w: f64) {
        if i == j || w <= 0.0 {
            return;
        }
        *self.adj[i].entry(j as u32).or_insert(0.0) += w;
        *self.adj[j].entry(i as u32).or_insert(0.0) += w;
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adj[i].get(&(j as u32)).copied().unwrap_or(0.0)
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.adj[i].iter().map(|(&j, &w)| (j as usize, w))
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.adj[i].values().sum()
    }

    /// `L x` for the graph Laplacian `L = diag(degree) - W`.
    pub fn laplacian_apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.neighbors(i).map(|(j, w)| w * (x[i] - x[j])).sum())
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        if self.adj.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for (w, _) in self.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.len()
    }
}

#[derive(Debug, Clone)]
struct Pivot {
    vertex: u32,
    degree: f64,
    neighbors: Vec<(u32, f64)>,
}

/// Record of a partial elimination plus the reduced graph on the kept vertices.
#[derive(Debug, Clone)]
pub struct Elimination {
    pivots: Vec<Pivot>,
    /// Reduced graph; eliminated vertices have no edges left.
    pub reduced: WeightedGraph,
    /// Self-loop mass accumulated on every vertex.
    pub loops: Vec<f64>,
}

/// Eliminates every vertex with `eliminate[i] == true`, in minimum-degree
/// order with ties broken by index.
pub fn eliminate(graph: &WeightedGraph, eliminate: &[bool]) -> Result<Elimination> {
    let n = graph.len();
    let mut g = graph.clone();
    let mut loops = vec![0.0; n];
    let mut heap = BinaryHeap::new();
    for i in 0..n {
        if eliminate[i] {
            heap.push(Reverse((g.adj[i].len(), i)));
        }
    }
    let mut done = vec![false; n];
    let mut pivots = Vec::new();
    while let Some(Reverse((deg, i))) = heap.pop() {
        if done[i] || deg != g.adj[i].len() {
            continue;
        }
        done[i] = true;
        let nbrs: Vec<(u32, f64)> = std::mem::take(&mut g.adj[i]).into_iter().collect();
        let total: f64 = nbrs.iter().map(|&(_, w)| w).sum();
        if nbrs.is_empty() || total <= 0.0 {
            return Err(Error::Consistency(format!(
                "vertex {i} is disconnected from the kept vertices; the system is singular"
            )));
        }
        for &(j, wj) in &nbrs {
            g.adj[j as usize].remove(&(i as u32));
            loops[j as usize] += wj * (wj / total);
        }
        for (a, &(j, wj)) in nbrs.iter().enumerate() {
            for &(k, wk) in &nbrs[a + 1..] {
                let add = wj * (wk / total);
                *g.adj[j as usize].entry(k).or_insert(0.0) += add;
                *g.adj[k as usize].entry(j).or_insert(0.0) += add;
            }
        }
        for &(j, _) in &nbrs {
            let j = j as usize;
            if eliminate[j] && !done[j] {
                heap.push(Reverse((g.adj[j].len(), j)));
            }
        }
        pivots.push(Pivot { vertex: i as u32, degree: total, neighbors: nbrs });
    }
    Ok(Elimination { pivots, reduced: g, loops })
}

/// Factorisation of a connected Laplacian grounded at one vertex.
#[derive(Debug, Clone)]
pub struct GroundedLaplacian {
    n: usize,
    ground: usize,
    elim: Elimination,
}

impl GroundedLaplacian {
    /// Factorises `graph`, keeping `ground` for last.
    pub fn new(graph: &WeightedGraph, ground: usize) -> Result<Self> {
        let n = graph.len();
        if n == 0 || ground >= n {
            return Err(Error::Parameter("ground vertex outside the graph".into()));
        }
        if !graph.is_connected() {
            return Err(Error::Consistency("Laplacian graph is not connected".into()));
        }
        let mut mask = vec![true; n];
        mask[ground] = false;
        let elim = eliminate(graph, &mask)?;
        Ok(GroundedLaplacian { n, ground, elim })
    }

    /// Solves `L x = b` with `x[ground] = 0`. The equation at the ground
    /// vertex is dropped, so `b` should sum to zero for an exact solution.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut c = b.to_vec();
        for p in &self.elim.pivots {
            let ci = c[p.vertex as usize];
            if ci != 0.0 {
                for &(j, w) in &p.neighbors {
                    c[j as usize] += (w / p.degree) * ci;
                }
            }
        }
        let mut x = vec![0.0; self.n];
        x[self.ground] = 0.0;
        for p in self.elim.pivots.iter().rev() {
            let mut s = c[p.vertex as usize];
            for &(j, w) in &p.neighbors {
                s += w * x[j as usize];
            }
            x[p.vertex as usize] = s / p.degree;
        }
        x
    }

    pub fn fill(&self) -> usize {
        self.elim.pivots.iter().map(|p| p.neighbors.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize, w: f64) -> WeightedGraph {
        let mut g = WeightedGraph::new(n);
        for i in 0..n - 1 {
            g.add_edge(i, i + 1, w);
        }
        g
    }

    #[test]
    fn series_conductances_reduce_harmonically() {
        // a - h - b with weights 2 and 3: effective 2*3/(2+3)
        let mut g = WeightedGraph::new(3);
        g.add_edge(0, 1, 2.0);
        g.add_edge(1, 2, 3.0);
        let e = eliminate(&g, &[false, true, false]).unwrap();
        assert!((e.reduced.weight(0, 2) - 1.2).abs() < 1e-15);
        assert!((e.loops[0] - 0.8).abs() < 1e-15);
        assert!((e.loops[2] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn isolated_eliminated_vertex_is_singular() {
        let mut g = WeightedGraph::new(3);
        g.add_edge(0, 1, 1.0);
        assert!(matches!(eliminate(&g, &[false, false, true]), Err(Error::Consistency(_))));
    }

    #[test]
    fn grounded_solve_matches_laplacian() {
        let mut g = WeightedGraph::new(6);
        let edges = [(0, 1, 1.0), (1, 2, 0.5), (2, 3, 1e-9), (3, 4, 2.0), (4, 5, 0.3), (5, 0, 0.7), (1, 4, 1e-3)];
        for (i, j, w) in edges {
            g.add_edge(i, j, w);
        }
        let f = GroundedLaplacian::new(&g, 3).unwrap();
        let b = vec![1.0, -2.0, 0.5, 0.25, 0.75, -0.5];
        let x = f.solve(&b);
        assert_eq!(x[3], 0.0);
        let lx = g.laplacian_apply(&x);
        for i in 0..6 {
            if i != 3 {
                assert!((lx[i] - b[i]).abs() < 1e-9 * (1.0 + b[i].abs()), "{i}: {} vs {}", lx[i], b[i]);
            }
        }
    }

    #[test]
    fn tiny_conductance_keeps_relative_accuracy() {
        // two unit paths joined by one edge of weight 1e-30: the potential drop
        // across the weak edge is 1e30 and must come out exactly
        let mut g = path(4, 1.0);
        g.adj[1].remove(&2);
        g.adj[2].remove(&1);
        g.add_edge(1, 2, 1e-30);
        let f = GroundedLaplacian::new(&g, 0).unwrap();
        let x = f.solve(&[-1.0, 0.0, 0.0, 1.0]);
        assert!((x[3] - (2.0 + 1e30)).abs() / 1e30 < 1e-14);
        assert!((x[2] - x[1] - 1e30).abs() / 1e30 < 1e-14);
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let mut g = WeightedGraph::new(4);
        g.add_edge(0, 1, 1.0);
        g.add_edge(2, 3, 1.0);
        assert!(GroundedLaplacian::new(&g, 0).is_err());
    }
}
