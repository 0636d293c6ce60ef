//! Spectral gaps and Poincaré constants of reversible walks on boxes.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::elimination::{GroundedLaplacian, WeightedGraph};
use super::weights::effective_conductances_with;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::geometry::{decompose, giant_cluster, label_clusters};
use crate::lattice::{BoxRegion, LatticeSpec};
use crate::rng::{self, domain};

const BLOCK: usize = 4;
const MAX_ITER: usize = 2000;
const REL_TOL: f64 = 1e-13;

/// Which walk the gap refers to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WalkOperator {
    /// The original walk on the giant cluster of positive edges.
    Raw,
    /// The walk seen on the strong cluster, with effective conductances.
    Effective { xi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// Half-side of the box `[-n, n]^d`.
    pub n: usize,
    /// Poincaré constant, the inverse of the gap.
    pub a_n: f64,
    pub gap: f64,
    pub component_size: usize,
    pub iterations: usize,
}

fn d_dot(mass: &[f64], a: &[f64], b: &[f64]) -> f64 {
    mass.iter().zip(a).zip(b).map(|((m, x), y)| m * x * y).sum()
}

fn d_center(mass: &[f64], total: f64, v: &mut [f64]) {
    let mean = mass.iter().zip(v.iter()).map(|(m, x)| m * x).sum::<f64>() / total;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Centres every column and orthonormalises the block in the `mass` inner
/// product. Columns that collapse are dropped.
fn d_orthonormalize(mass: &[f64], total: f64, cols: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(cols.len());
    for mut v in cols {
        let scale0 = d_dot(mass, &v, &v).sqrt();
        for _ in 0..2 {
            d_center(mass, total, &mut v);
            for q in &out {
                let c = d_dot(mass, q, &v);
                v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = d_dot(mass, &v, &v).sqrt();
        if norm > 1e-10 * scale0 && norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
            out.push(v);
        }
    }
    out
}

/// Smallest nonzero `lambda` with `L v = lambda D v`, where `L` is the
/// Laplacian of a connected graph and `D = diag(mass)`. Returns the gap and
/// the number of iterations.
///
/// Runs block inverse iteration with Rayleigh-Ritz steps. The grounded
/// Laplacian is factorised by positive elimination, so gaps far below machine
/// epsilon relative to the largest eigenvalue are still resolved.
pub fn generalized_gap(graph: &WeightedGraph, mass: &[f64]) -> Result<(f64, usize)> {
    let m = graph.len();
    if m < 2 {
        return Err(Error::Degenerate("spectral gap needs at least two vertices".into()));
    }
    if mass.len() != m || mass.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Parameter("mass must be positive and finite on every vertex".into()));
    }
    let total: f64 = mass.iter().sum();
    let ground = (0..m).max_by_key(|&i| graph.neighbors(i).count()).unwrap_or(0);
    let fact = GroundedLaplacian::new(graph, ground)?;
    let k = BLOCK.min(m - 1);
    let mut rng = rng::stream(0x5eed, domain::AUX, m as u64);
    let start: Vec<Vec<f64>> = (0..k).map(|_| (0..m).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
    let mut v = d_orthonormalize(mass, total, start);
    let mut prev = f64::NAN;
    for it in 1..=MAX_ITER {
        let w: Vec<Vec<f64>> = v
            .iter()
            .map(|col| {
                let b: Vec<f64> = col.iter().zip(mass).map(|(x, d)| x * d).collect();
                let mut x = fact.solve(&b);
                d_center(mass, total, &mut x);
                x
            })
            .collect();
        let kk = v.len();
        let mut h = DMatrix::<f64>::zeros(kk, kk);
        for i in 0..kk {
            for j in 0..kk {
                h[(i, j)] = d_dot(mass, &v[i], &w[j]);
            }
        }
        let h = (&h + h.transpose()) * 0.5;
        let theta = SymmetricEigen::new(h).eigenvalues.max();
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::Consistency(format!("inverse iteration produced Ritz value {theta}")));
        }
        if it > 2 && ((theta - prev) / theta).abs() < REL_TOL {
            return Ok((1.0 / theta, it));
        }
        prev = theta;
        v = d_orthonormalize(mass, total, w);
        if v.is_empty() {
            return Err(Error::Consistency("inverse iteration block collapsed".into()));
        }
    }
    log::warn!("spectral solver stopped after {MAX_ITER} iterations");
    Ok((1.0 / prev, MAX_ITER))
}

/// Gap of `D^{-1/2} L D^{-1/2}` by a dense symmetric eigensolve. Intended for
/// small graphs.
pub fn dense_gap(graph: &WeightedGraph, mass: &[f64]) -> Result<f64> {
    let m = graph.len();
    if m < 2 {
        return Err(Error::Degenerate("spectral gap needs at least two vertices".into()));
    }
    let mut s = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for (j, w) in graph.neighbors(i) {
            s[(i, j)] = -w / (mass[i] * mass[j]).sqrt();
            s[(i, i)] += w / mass[i];
        }
    }
    let mut eig: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig[1])
}

/// Vertex of `cand` closest to the lattice origin in Euclidean distance,
/// smallest index on ties.
fn nearest_to_origin(spec: &LatticeSpec, cand: impl Iterator<Item = usize>) -> Option<usize> {
    let o = spec.origin();
    cand.map(|v| (spec.euclidean_distance(o, v), v))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, v)| v)
}

/// Connected component of `root` in the graph given by `nbrs`.
fn component(n: usize, root: usize, nbrs: impl Fn(usize) -> Vec<(usize, f64)>) -> Vec<usize> {
    let mut seen = vec![false; n];
    seen[root] = true;
    let mut queue = VecDeque::from([root]);
    let mut out = vec![root];
    while let Some(v) = queue.pop_front() {
        for (w, _) in nbrs(v) {
            if !seen[w] {
                seen[w] = true;
                out.push(w);
                queue.push_back(w);
            }
        }
    }
    out.sort_unstable();
    out
}

/// Box component `C^n` with its weighted graph and vertex masses.
#[derive(Debug, Clone)]
pub struct BoxComponent {
    /// Lattice vertices, increasing.
    pub vertices: Vec<usize>,
    pub graph: WeightedGraph,
    /// `n(x)` of the original environment.
    pub mass: Vec<f64>,
}

/// The component of the relevant cluster inside `[-n, n]^d` that contains
/// its vertex nearest to the origin, with the conductances of `op`.
pub fn box_component(env: &Environment, op: WalkOperator, n: usize) -> Result<BoxComponent> {
    let spec = env.spec();
    let region = BoxRegion::centered(spec, n)?;
    let inbox = region.mask(spec)?;
    let nv = spec.num_vertices();
    let (vertices, edges): (Vec<usize>, Vec<(usize, usize, f64)>) = match op {
        WalkOperator::Raw => {
            let alpha = env.threshold_mask(0.0);
            let labels = label_clusters(spec, &alpha);
            let giant = giant_cluster(&labels);
            let member: Vec<bool> = (0..nv).map(|v| inbox[v] && labels.label(v) == giant.id).collect();
            let root = nearest_to_origin(spec, (0..nv).filter(|&v| member[v]))
                .ok_or_else(|| Error::Degenerate(format!("giant cluster misses the box of half-side {n}")))?;
            let nb = |v: usize| -> Vec<(usize, f64)> {
                spec.neighbors(v)
                    .filter(|&(dir, w, _)| member[w] && env.conductance_dir(v, dir) > 0.0)
                    .map(|(dir, w, _)| (w, env.conductance_dir(v, dir)))
                    .collect()
            };
            let verts = component(nv, root, nb);
            let mut edges = Vec::new();
            for &v in &verts {
                for (w, c) in nb(v) {
                    if v < w {
                        edges.push((v, w, c));
                    }
                }
            }
            (verts, edges)
        }
        WalkOperator::Effective { xi } => {
            let hs = decompose(env, xi)?;
            let weights = effective_conductances_with(env, &hs, &region)?;
            let root = nearest_to_origin(spec, weights.vertices().iter().copied())
                .ok_or_else(|| Error::Degenerate(format!("strong cluster misses the box of half-side {n}")))?;
            let verts = component(nv, root, |v| weights.neighbors(v).to_vec());
            let mut edges = Vec::new();
            for &v in &verts {
                for &(w, c) in weights.neighbors(v) {
                    if v < w {
                        edges.push((v, w, c));
                    }
                }
            }
            (verts, edges)
        }
    };
    let mut local = vec![usize::MAX; nv];
    for (i, &v) in vertices.iter().enumerate() {
        local[v] = i;
    }
    let mut graph = WeightedGraph::new(vertices.len());
    for (v, w, c) in edges {
        graph.add_edge(local[v], local[w], c);
    }
    let mass = vertices.iter().map(|&v| env.weight_unchecked(v)).collect();
    Ok(BoxComponent { vertices, graph, mass })
}

/// Poincaré constant `A_n` of the walk reflected inside `[-n, n]^d`.
pub fn poincare_constant(env: &Environment, op: WalkOperator, n: usize) -> Result<SpectralReport> {
    let comp = box_component(env, op, n)?;
    if comp.vertices.len() < 2 {
        return Err(Error::Degenerate(format!(
            "box component of half-side {n} has {} vertex",
            comp.vertices.len()
        )));
    }
    let (gap, iterations) = generalized_gap(&comp.graph, &comp.mass)?;
    Ok(SpectralReport { n, a_n: 1.0 / gap, gap, component_size: comp.vertices.len(), iterations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::ConductanceLaw;
    use crate::sample_environment;

    #[test]
    fn two_state_chain() {
        let mut g = WeightedGraph::new(2);
        g.add_edge(0, 1, 1.0);
        let (gap, _) = generalized_gap(&g, &[1.0, 1.0]).unwrap();
        assert!((gap - 2.0).abs() < 1e-12);
        assert!((dense_gap(&g, &[1.0, 1.0]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn cycle_gap_closed_form() {
        // simple random walk on a cycle of length m: gap 1 - cos(2 pi / m)
        let m = 40;
        let mut g = WeightedGraph::new(m);
        for i in 0..m {
            g.add_edge(i, (i + 1) % m, 1.0);
        }
        let (gap, _) = generalized_gap(&g, &vec![2.0; m]).unwrap();
        let exact = 1.0 - (2.0 * std::f64::consts::PI / m as f64).cos();
        assert!((gap - exact).abs() < 1e-12 * exact.max(1.0), "{gap} vs {exact}");
    }

    #[test]
    fn bottleneck_gap_is_resolved_relatively() {
        // two unit paths joined by weight eps: gap ~ eps (1/m1 + 1/m2) / 2
        let mut g = WeightedGraph::new(6);
        for (i, j) in [(0, 1), (1, 2), (3, 4), (4, 5)] {
            g.add_edge(i, j, 1.0);
        }
        let eps = 1e-25;
        g.add_edge(2, 3, eps);
        let mass = vec![1.0; 6];
        let (gap, _) = generalized_gap(&g, &mass).unwrap();
        let approx = eps * (1.0 / 3.0 + 1.0 / 3.0);
        assert!((gap / approx - 1.0).abs() < 1e-6, "{gap}");
    }

    #[test]
    fn matches_dense_oracle_on_small_boxes() {
        let spec = LatticeSpec::torus(2, 12).unwrap();
        let law = ConductanceLaw::ZeroUniformMixture { q: 0.8 };
        for seed in 0..10 {
            let env = sample_environment(&spec, &law, seed).unwrap();
            let comp = box_component(&env, WalkOperator::Raw, 2).unwrap();
            if comp.vertices.len() < 2 {
                continue;
            }
            let (gap, _) = generalized_gap(&comp.graph, &comp.mass).unwrap();
            let dense = dense_gap(&comp.graph, &comp.mass).unwrap();
            assert!((gap - dense).abs() <= 1e-8 * dense, "seed {seed}: {gap} vs {dense}");
        }
    }

    #[test]
    fn trivial_component_is_degenerate() {
        let spec = LatticeSpec::torus(2, 7).unwrap();
        let mut values = vec![0.0; spec.num_slots()];
        let far = spec.index(&[0, 0]).unwrap();
        // the giant is an edge far away; the box around the origin misses it
        values[spec.slot(far, 0).unwrap()] = 1.0;
        values[spec.slot(far, 2).unwrap()] = 1.0;
        let env = Environment::from_values(spec.clone(), values, "test", 0).unwrap();
        assert!(matches!(poincare_constant(&env, WalkOperator::Raw, 1), Err(Error::Degenerate(_))));
    }
}
