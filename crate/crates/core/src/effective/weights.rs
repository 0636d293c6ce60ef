//! Effective conductances of the walk watched only on the strong cluster.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::elimination::{eliminate, WeightedGraph};
use crate::env::{EdgeMask, Environment};
use crate::error::{Error, Result};
use crate::geometry::{decompose, HoleStructure, NO_HOLE};
use crate::lattice::{BoxRegion, LatticeSpec};

/// One unordered pair with its effective conductance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub x: usize,
    pub y: usize,
    pub weight: f64,
    /// The pair is connected through a hole that leaves the window or
    /// touches a free lattice boundary.
    pub partial: bool,
}

/// Sparse symmetric map `(x, y) -> w(x, y)` on the strong cluster inside a window.
#[derive(Debug, Clone)]
pub struct EffectiveWeights {
    spec: LatticeSpec,
    xi: f64,
    window: BoxRegion,
    member: Vec<bool>,
    vertices: Vec<usize>,
    node_weight: Vec<f64>,
    weights: BTreeMap<(usize, usize), f64>,
    partial: BTreeSet<(usize, usize)>,
    self_loops: BTreeMap<usize, f64>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

fn key(x: usize, y: usize) -> (usize, usize) {
    if x < y {
        (x, y)
    } else {
        (y, x)
    }
}

impl EffectiveWeights {
    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn window(&self) -> &BoxRegion {
        &self.window
    }

    /// Strong-cluster vertices inside the window, increasing.
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn contains(&self, x: usize) -> bool {
        self.member.get(x).copied().unwrap_or(false)
    }

    /// Membership mask over the whole lattice.
    pub fn membership(&self) -> &[bool] {
        &self.member
    }

    /// Total conductance `n(x)` of the original environment at `x`.
    pub fn node_weight(&self, x: usize) -> f64 {
        self.node_weight[x]
    }

    /// `w(x, y)` for `x != y`, zero if the pair carries no weight.
    pub fn weight(&self, x: usize, y: usize) -> f64 {
        if x == y {
            return 0.0;
        }
        self.weights.get(&key(x, y)).copied().unwrap_or(0.0)
    }

    pub fn is_partial(&self, x: usize, y: usize) -> bool {
        self.partial.contains(&key(x, y))
    }

    /// Mass of jumps from `x` that come back to `x` before reaching another
    /// strong vertex. Not part of the weights.
    pub fn self_loop(&self, x: usize) -> f64 {
        self.self_loops.get(&x).copied().unwrap_or(0.0)
    }

    pub fn num_pairs(&self) -> usize {
        self.weights.len()
    }

    /// Neighbours of `x` with positive weight, increasing.
    pub fn neighbors(&self, x: usize) -> &[(usize, f64)] {
        if self.contains(x) {
            &self.adjacency[x]
        } else {
            &[]
        }
    }

    /// All pairs `x < y` in increasing order.
    pub fn entries(&self) -> impl Iterator<Item = WeightEntry> + '_ {
        self.weights.iter().map(|(&(x, y), &weight)| WeightEntry {
            x,
            y,
            weight,
            partial: self.partial.contains(&(x, y)),
        })
    }

    /// `sum_y w(x, y)`.
    pub fn total_weight(&self, x: usize) -> f64 {
        self.neighbors(x).iter().map(|&(_, w)| w).sum()
    }
}

/// Per-hole contribution: pairs of adjacent strong vertices with weights, and
/// self-loop masses.
struct HoleReduction {
    pairs: Vec<(usize, usize, f64)>,
    loops: Vec<(usize, f64)>,
    partial: bool,
}

fn reduce_hole(env: &Environment, hs: &HoleStructure, h: usize, window: &[bool]) -> Result<HoleReduction> {
    let spec = env.spec();
    let hole = &hs.holes.holes[h];
    let adj = &hs.holes.adjacency[h];
    let mut local: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, &v) in hole.iter().chain(adj.iter()).enumerate() {
        local.insert(v, i);
    }
    let nh = hole.len();
    let mut g = WeightedGraph::new(nh + adj.len());
    let mut partial = adj.iter().chain(hole.iter()).any(|&v| !window[v]);
    for &v in hole {
        let i = local[&v];
        let mut degree = 0;
        for (dir, w, _) in spec.neighbors(v) {
            degree += 1;
            let c = env.conductance_dir(v, dir);
            if c <= 0.0 {
                continue;
            }
            match local.get(&w) {
                Some(&j) if j >= nh || v < w => g.add_edge(i, j, c),
                Some(_) => {}
                None => {
                    return Err(Error::Consistency(format!(
                        "hole vertex {v} has an open edge to {w}, outside the hole and the strong cluster"
                    )))
                }
            }
        }
        if degree < 2 * spec.dim() {
            partial = true;
        }
    }
    let mut mask = vec![false; g.len()];
    mask[..nh].iter_mut().for_each(|m| *m = true);
    let elim = eliminate(&g, &mask)
        .map_err(|e| Error::Consistency(format!("hole {h} is not attached to the strong cluster: {e}")))?;
    let mut pairs = Vec::new();
    let mut loops = Vec::new();
    for a in 0..adj.len() {
        let ia = nh + a;
        for (jb, w) in elim.reduced.neighbors(ia) {
            if jb > ia {
                pairs.push((adj[a], adj[jb - nh], w));
            }
        }
        loops.push((adj[a], elim.loops[ia]));
    }
    Ok(HoleReduction { pairs, loops, partial })
}

/// Effective conductances on the strong cluster `C^xi` inside `window`.
///
/// Pairs of lattice neighbours in `C^xi` keep their conductance; every hole
/// adds the conductances of its Kron reduction onto its adjacent strong
/// vertices. Holes are reduced concurrently.
pub fn effective_conductances(env: &Environment, xi: f64, window: &BoxRegion) -> Result<EffectiveWeights> {
    let hs = decompose(env, xi)?;
    effective_conductances_with(env, &hs, window)
}

/// As [`effective_conductances`] with a precomputed hole structure.
pub fn effective_conductances_with(env: &Environment, hs: &HoleStructure, window: &BoxRegion) -> Result<EffectiveWeights> {
    let spec = env.spec();
    let in_window = window.mask(spec)?;
    let member: Vec<bool> = hs.in_cxi.iter().zip(&in_window).map(|(&a, &b)| a && b).collect();
    let vertices: Vec<usize> = (0..member.len()).filter(|&v| member[v]).collect();
    if vertices.is_empty() {
        return Err(Error::Degenerate("the strong cluster does not meet the window".into()));
    }
    let mut weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &x in &vertices {
        for (dir, y, _) in spec.neighbors(x) {
            if x < y && member[y] {
                let c = env.conductance_dir(x, dir);
                if c > 0.0 {
                    *weights.entry((x, y)).or_insert(0.0) += c;
                }
            }
        }
    }
    let relevant: Vec<usize> = (0..hs.holes.len())
        .filter(|&h| hs.holes.adjacency[h].iter().any(|&v| member[v]))
        .collect();
    let reductions: Vec<HoleReduction> = relevant
        .par_iter()
        .map(|&h| reduce_hole(env, hs, h, &in_window))
        .collect::<Result<_>>()?;
    let mut partial = BTreeSet::new();
    let mut self_loops = BTreeMap::new();
    for r in reductions {
        for (x, y, w) in r.pairs {
            if member[x] && member[y] {
                *weights.entry(key(x, y)).or_insert(0.0) += w;
                if r.partial {
                    partial.insert(key(x, y));
                }
            }
        }
        for (x, w) in r.loops {
            if member[x] {
                *self_loops.entry(x).or_insert(0.0) += w;
            }
        }
    }
    let mut adjacency = vec![Vec::new(); member.len()];
    for (&(x, y), &w) in &weights {
        adjacency[x].push((y, w));
        adjacency[y].push((x, w));
    }
    for list in &mut adjacency {
        list.sort_by_key(|&(y, _)| y);
    }
    Ok(EffectiveWeights {
        spec: spec.clone(),
        xi: hs.xi,
        window: window.clone(),
        member,
        vertices,
        node_weight: env.weights(),
        weights,
        partial,
        self_loops,
        adjacency,
    })
}

/// Distribution of the next strong-cluster vertex visited by the jump chain
/// started at `x`, computed by solving the harmonic system of each adjacent
/// hole with a dense LU factorisation. Includes the return probability to
/// `x`. Intended for holes of moderate size.
pub fn next_point_distribution(env: &Environment, hs: &HoleStructure, x: usize) -> Result<BTreeMap<usize, f64>> {
    let spec = env.spec();
    spec.check_vertex(x)?;
    if !hs.in_cxi[x] {
        return Err(Error::Domain(format!("vertex {x} is not in the strong cluster")));
    }
    let nx = env.weight_unchecked(x);
    let mut out = BTreeMap::new();
    let mut per_hole: BTreeMap<u32, Vec<(usize, f64)>> = BTreeMap::new();
    for (dir, z, _) in spec.neighbors(x) {
        let c = env.conductance_dir(x, dir);
        if c <= 0.0 {
            continue;
        }
        if hs.in_cxi[z] {
            *out.entry(z).or_insert(0.0) += c / nx;
        } else if hs.hole_of[z] != NO_HOLE {
            per_hole.entry(hs.hole_of[z]).or_default().push((z, c / nx));
        } else {
            return Err(Error::Consistency(format!("open edge from {x} to {z} outside the cluster")));
        }
    }
    for (h, starts) in per_hole {
        let hole = &hs.holes.holes[h as usize];
        let adj = &hs.holes.adjacency[h as usize];
        let hidx: BTreeMap<usize, usize> = hole.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let aidx: BTreeMap<usize, usize> = adj.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let m = hole.len();
        let mut a = DMatrix::<f64>::identity(m, m);
        let mut b = DMatrix::<f64>::zeros(m, adj.len());
        for (i, &v) in hole.iter().enumerate() {
            let nv = env.weight_unchecked(v);
            for (dir, w, _) in spec.neighbors(v) {
                let c = env.conductance_dir(v, dir);
                if c <= 0.0 {
                    continue;
                }
                if let Some(&j) = hidx.get(&w) {
                    a[(i, j)] -= c / nv;
                } else if let Some(&j) = aidx.get(&w) {
                    b[(i, j)] += c / nv;
                } else {
                    return Err(Error::Consistency(format!("hole vertex {v} leaks to {w}")));
                }
            }
        }
        let lu = a.lu();
        let sol = lu
            .solve(&b)
            .ok_or_else(|| Error::Consistency(format!("hole {h} is not attached to the strong cluster")))?;
        for (z, p) in starts {
            let row = hidx[&z];
            for (j, &y) in adj.iter().enumerate() {
                let q = sol[(row, j)];
                if q != 0.0 {
                    *out.entry(y).or_insert(0.0) += p * q;
                }
            }
        }
    }
    Ok(out)
}

/// Effective conductances `n(x) P_x(next strong point = y)` from `x`, by the
/// directed harmonic-solve route. The diagonal is dropped.
pub fn directed_rates(env: &Environment, hs: &HoleStructure, x: usize) -> Result<BTreeMap<usize, f64>> {
    let nx = env.weight_unchecked(x);
    let mut d = next_point_distribution(env, hs, x)?;
    d.remove(&x);
    Ok(d.into_iter().map(|(y, p)| (y, nx * p)).collect())
}

/// Weights defining a Dirichlet form.
#[derive(Debug, Clone, Copy)]
pub enum FormWeights<'a> {
    /// Effective conductances, optionally restricted to a vertex subset.
    Effective { weights: &'a EffectiveWeights, members: Option<&'a [bool]> },
    /// 0/1 weights of an edge mask between lattice neighbours of `members`.
    Mask { spec: &'a LatticeSpec, mask: &'a EdgeMask, members: &'a [bool] },
}

/// `1/2 sum_{x,y} w(x,y) (f(x) - f(y))^2` over ordered pairs of the vertex set.
pub fn dirichlet_form(weights: FormWeights<'_>, f: impl Fn(usize) -> f64) -> f64 {
    match weights {
        FormWeights::Effective { weights, members } => {
            let inside = |v: usize| members.is_none_or(|m| m[v]);
            weights
                .entries()
                .filter(|e| inside(e.x) && inside(e.y))
                .map(|e| e.weight * (f(e.x) - f(e.y)).powi(2))
                .sum()
        }
        FormWeights::Mask { spec, mask, members } => {
            let mut total = 0.0;
            for slot in spec.edge_slots() {
                if !mask.is_open(slot) {
                    continue;
                }
                let (x, y) = spec.endpoints(slot);
                if members[x] && members[y] {
                    total += (f(x) - f(y)).powi(2);
                }
            }
            total
        }
    }
}

/// Weights as a vector of `(x, y, w)` triplets with `x < y`.
pub fn to_triplets(weights: &EffectiveWeights) -> Vec<(usize, usize, f64)> {
    weights.entries().map(|e| (e.x, e.y, e.weight)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::holes::tests::single_vertex_hole;
    use crate::law::ConductanceLaw;
    use crate::sample_environment;

    #[test]
    fn no_holes_keeps_the_conductances() {
        let spec = LatticeSpec::torus(2, 6).unwrap();
        let env = sample_environment(&spec, &ConductanceLaw::TwoPoint { q: 0.5, lo: 0.25, hi: 1.0 }, 3).unwrap();
        let w = effective_conductances(&env, 0.1, &BoxRegion::whole(&spec)).unwrap();
        assert_eq!(w.vertices().len(), 36);
        assert_eq!(w.num_pairs(), 72);
        for slot in spec.edge_slots() {
            let (x, y) = spec.endpoints(slot);
            assert_eq!(w.weight(x, y), env.slot_value(slot));
        }
    }

    #[test]
    fn single_vertex_hole_adds_series_conductance() {
        let (env, h) = single_vertex_hole();
        let spec = env.spec().clone();
        let w = effective_conductances(&env, 0.5, &BoxRegion::whole(&spec)).unwrap();
        assert!(!w.contains(h));
        let nb: Vec<usize> = spec.neighbors(h).map(|(_, y, _)| y).collect();
        let c: Vec<f64> = spec.neighbors(h).map(|(dir, _, _)| env.conductance_dir(h, dir)).collect();
        let total: f64 = c.iter().sum();
        for i in 0..nb.len() {
            for j in i + 1..nb.len() {
                let expect = env.conductance(nb[i], nb[j]).unwrap_or(0.0) + c[i] * c[j] / total;
                assert!((w.weight(nb[i], nb[j]) - expect).abs() < 1e-12);
            }
            assert!((w.self_loop(nb[i]) - c[i] * c[i] / total).abs() < 1e-12);
        }
    }

    #[test]
    fn directed_route_agrees_with_reduction() {
        let spec = LatticeSpec::torus(2, 10).unwrap();
        let law = ConductanceLaw::TwoPoint { q: 0.7, lo: 0.05, hi: 1.0 };
        for seed in 0..5 {
            let env = sample_environment(&spec, &law, seed).unwrap();
            let hs = decompose(&env, 0.5).unwrap();
            let w = effective_conductances_with(&env, &hs, &BoxRegion::whole(&spec)).unwrap();
            for &x in w.vertices() {
                let d = directed_rates(&env, &hs, x).unwrap();
                for (&y, &r) in &d {
                    assert!((r - w.weight(x, y)).abs() < 1e-10, "seed {seed} {x}->{y}");
                }
                assert_eq!(d.len(), w.neighbors(x).len());
            }
        }
    }

    #[test]
    fn forms() {
        let spec = LatticeSpec::free(2, 2).unwrap();
        let env = Environment::constant(&spec, 0.5).unwrap();
        let w = effective_conductances(&env, 0.5, &BoxRegion::whole(&spec)).unwrap();
        let f = |v: usize| v as f64;
        assert_eq!(dirichlet_form(FormWeights::Effective { weights: &w, members: None }, |_| 2.0), 0.0);
        // edges 0-1, 2-3 differ by 1; 0-2, 1-3 by 2
        assert_eq!(dirichlet_form(FormWeights::Effective { weights: &w, members: None }, f), 0.5 * (1.0 + 1.0 + 4.0 + 4.0));
        let mask = EdgeMask::all(&spec, true);
        let members = vec![true, true, false, false];
        assert_eq!(dirichlet_form(FormWeights::Mask { spec: &spec, mask: &mask, members: &members }, f), 1.0);
    }
}
