//! Holes: connected pieces of the giant positive cluster that the giant
//! strong cluster misses.

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use super::clusters::{giant_cluster, label_clusters, ClusterLabeling, GiantCluster};
use crate::env::{EdgeMask, Environment};
use crate::error::{Error, Result};
use crate::lattice::{BoxRegion, LatticeSpec};

pub const NO_HOLE: u32 = u32::MAX;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct HoleSet {
    /// Vertex sets, each sorted; holes are ordered by their smallest vertex.
    pub holes: Vec<Vec<usize>>,
    /// Per hole, the strong-cluster vertices with a lattice neighbour in it.
    pub adjacency: Vec<Vec<usize>>,
}

impl HoleSet {
    pub fn len(&self) -> usize {
        self.holes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.holes.is_empty()
    }

    pub fn total_volume(&self) -> usize {
        self.holes.iter().map(Vec::len).sum()
    }
}

/// Giant clusters of the positive and strong subgraphs plus their holes.
#[derive(Debug, Clone)]
pub struct HoleStructure {
    pub xi: f64,
    pub alpha: ClusterLabeling,
    pub alpha_giant: GiantCluster,
    pub strong: ClusterLabeling,
    pub strong_giant: GiantCluster,
    /// Membership in the giant positive cluster `C`.
    pub in_c: Vec<bool>,
    /// Membership in the giant strong cluster `C^xi`.
    pub in_cxi: Vec<bool>,
    pub hole_of: Vec<u32>,
    pub holes: HoleSet,
}

impl HoleStructure {
    /// Hole ids lattice-adjacent to a strong-cluster vertex.
    pub fn holes_next_to(&self, spec: &LatticeSpec, x: usize) -> Vec<u32> {
        let mut out: Vec<u32> = spec
            .neighbors(x)
            .map(|(_, w, _)| self.hole_of[w])
            .filter(|&h| h != NO_HOLE)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Decomposes `env` at threshold `xi` from explicit positive and strong masks.
pub fn decompose_masks(spec: &LatticeSpec, alpha: &EdgeMask, strong: &EdgeMask, xi: f64) -> Result<HoleStructure> {
    let alpha_lab = label_clusters(spec, alpha);
    let alpha_giant = giant_cluster(&alpha_lab);
    if alpha_giant.size <= 1 {
        return Err(Error::Degenerate("the positive subgraph has no edge".into()));
    }
    let strong_lab = label_clusters(spec, strong);
    let strong_giant = giant_cluster(&strong_lab);
    if strong_giant.size <= 1 {
        return Err(Error::Degenerate(format!("no edge reaches the threshold {xi}")));
    }
    let in_c = alpha_lab.membership(alpha_giant.id);
    let in_cxi = strong_lab.membership(strong_giant.id);
    if in_cxi.iter().zip(&in_c).any(|(&s, &c)| s && !c) {
        return Err(Error::Degenerate(
            "the largest strong cluster lies outside the largest positive cluster".into(),
        ));
    }
    let n = spec.num_vertices();
    let mut hole_of = vec![NO_HOLE; n];
    let mut holes = HoleSet::default();
    let mut queue = VecDeque::new();
    for s in 0..n {
        if !in_c[s] || in_cxi[s] || hole_of[s] != NO_HOLE {
            continue;
        }
        let id = holes.holes.len() as u32;
        let mut members = vec![s];
        let mut adj = Vec::new();
        hole_of[s] = id;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            for (_, w, _) in spec.neighbors(v) {
                if in_cxi[w] {
                    adj.push(w);
                } else if in_c[w] && hole_of[w] == NO_HOLE {
                    hole_of[w] = id;
                    members.push(w);
                    queue.push_back(w);
                }
            }
        }
        members.sort_unstable();
        adj.sort_unstable();
        adj.dedup();
        holes.holes.push(members);
        holes.adjacency.push(adj);
    }
    Ok(HoleStructure {
        xi,
        alpha: alpha_lab,
        alpha_giant,
        strong: strong_lab,
        strong_giant,
        in_c,
        in_cxi,
        hole_of,
        holes,
    })
}

pub fn decompose(env: &Environment, xi: f64) -> Result<HoleStructure> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::Parameter(format!("threshold {xi} outside [0,1]")));
    }
    decompose_masks(env.spec(), &env.threshold_mask(0.0), &env.threshold_mask(xi), xi)
}

pub fn find_holes(env: &Environment, xi: f64) -> Result<HoleSet> {
    Ok(decompose(env, xi)?.holes)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HoleVolumeStats {
    pub max_volume: usize,
    /// volume -> number of holes
    pub histogram: BTreeMap<usize, usize>,
    pub count_intersecting: usize,
}

/// Exact volume statistics; `count_intersecting` counts holes meeting `[-n,n]^d`.
pub fn hole_volume_stats(holes: &HoleSet, spec: &LatticeSpec, n: usize) -> Result<HoleVolumeStats> {
    let window = BoxRegion::centered(spec, n)?.mask(spec)?;
    let mut histogram = BTreeMap::new();
    let mut max_volume = 0;
    let mut count_intersecting = 0;
    for h in &holes.holes {
        *histogram.entry(h.len()).or_insert(0) += 1;
        max_volume = max_volume.max(h.len());
        if h.iter().any(|&v| window[v]) {
            count_intersecting += 1;
        }
    }
    Ok(HoleVolumeStats { max_volume, histogram, count_intersecting })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::env::sample_environment;
    use crate::law::ConductanceLaw;

    /// 5x5 free box, all edges strong except the four edges at the centre,
    /// which are positive but weak.
    pub(crate) fn single_vertex_hole() -> (Environment, usize) {
        let spec = LatticeSpec::free(2, 5).unwrap();
        let mut env = Environment::constant(&spec, 1.0).unwrap();
        let c = spec.index(&[2, 2]).unwrap();
        let nbrs: Vec<usize> = spec.neighbors(c).map(|(_, w, _)| w).collect();
        for (i, y) in nbrs.into_iter().enumerate() {
            env.set_conductance(c, y, 0.1 + 0.05 * i as f64).unwrap();
        }
        (env, c)
    }

    #[test]
    fn strong_environment_has_no_holes() {
        let spec = LatticeSpec::torus(2, 6).unwrap();
        let env = Environment::constant(&spec, 0.7).unwrap();
        assert!(find_holes(&env, 0.5).unwrap().is_empty());
    }

    #[test]
    fn weak_edge_inside_strong_cluster_makes_no_hole() {
        let spec = LatticeSpec::torus(2, 6).unwrap();
        let mut env = Environment::constant(&spec, 1.0).unwrap();
        env.set_conductance(0, 1, 0.01).unwrap();
        assert!(find_holes(&env, 0.5).unwrap().is_empty());
    }

    #[test]
    fn single_vertex_hole_by_exhaustive_set_difference() {
        let (env, c) = single_vertex_hole();
        let spec = env.spec().clone();
        let hs = decompose(&env, 0.5).unwrap();
        // brute force: C = everything (all edges positive); C^xi = vertices with a strong edge
        let expected: Vec<usize> = (0..25)
            .filter(|&v| spec.neighbors(v).all(|(_, _, s)| env.slot_value(s) < 0.5))
            .collect();
        assert_eq!(expected, vec![c]);
        assert_eq!(hs.holes.holes, vec![expected]);
        let mut nbrs: Vec<usize> = spec.neighbors(c).map(|(_, w, _)| w).collect();
        nbrs.sort_unstable();
        assert_eq!(hs.holes.adjacency, vec![nbrs]);
        let stats = hole_volume_stats(&hs.holes, &spec, 2).unwrap();
        assert_eq!(stats.max_volume, 1);
        assert_eq!(stats.count_intersecting, 1);
    }

    #[test]
    fn empty_stats() {
        let spec = LatticeSpec::torus(2, 5).unwrap();
        let s = hole_volume_stats(&HoleSet::default(), &spec, 1).unwrap();
        assert_eq!(s.max_volume, 0);
        assert!(s.histogram.is_empty());
    }

    #[test]
    fn degenerate_environment_is_rejected() {
        let spec = LatticeSpec::torus(2, 5).unwrap();
        let env = Environment::constant(&spec, 0.0).unwrap();
        assert!(matches!(find_holes(&env, 0.5), Err(Error::Degenerate(_))));
    }

    #[test]
    fn holes_partition_the_set_difference() {
        for seed in 0..20 {
            let spec = LatticeSpec::torus(2, 40).unwrap();
            let env = sample_environment(&spec, &ConductanceLaw::ZeroUniformMixture { q: 0.8 }, seed).unwrap();
            let hs = decompose(&env, 0.2).unwrap();
            let diff = (0..spec.num_vertices()).filter(|&v| hs.in_c[v] && !hs.in_cxi[v]).count();
            assert_eq!(hs.holes.total_volume(), diff);
            let mut seen = vec![false; spec.num_vertices()];
            for (id, h) in hs.holes.holes.iter().enumerate() {
                for &v in h {
                    assert!(!seen[v]);
                    seen[v] = true;
                    assert_eq!(hs.hole_of[v], id as u32);
                    assert!(hs.in_c[v] && !hs.in_cxi[v]);
                }
                for &a in &hs.holes.adjacency[id] {
                    assert!(hs.in_cxi[a]);
                    assert!(spec.neighbors(a).any(|(_, w, _)| hs.hole_of[w] == id as u32));
                }
            }
        }
    }

    #[test]
    fn strong_cluster_shrinks_as_threshold_rises() {
        let spec = LatticeSpec::torus(2, 48).unwrap();
        for seed in 0..10 {
            let env = sample_environment(&spec, &ConductanceLaw::ZeroUniformMixture { q: 0.9 }, seed).unwrap();
            let xis = [0.0, 0.05, 0.1, 0.2, 0.3];
            for w in xis.windows(2) {
                let (lo, hi) = (env.threshold_mask(w[0]), env.threshold_mask(w[1]));
                assert!(hi.is_subset_of(&lo));
                let glo = giant_cluster(&label_clusters(&spec, &lo)).size;
                let ghi = giant_cluster(&label_clusters(&spec, &hi)).size;
                assert!(ghi <= glo);
            }
        }
    }
}
