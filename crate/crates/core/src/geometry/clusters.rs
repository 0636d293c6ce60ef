//! Connected components of the open subgraph.

use log::warn;
use serde::Serialize;

use super::union_find::UnionFind;
use crate::env::EdgeMask;
use crate::lattice::LatticeSpec;

/// Density below which the largest cluster is not a credible stand-in for an
/// infinite one.
pub const SUBCRITICAL_DENSITY: f64 = 1e-3;

/// Cluster ids are numbered by their smallest vertex, so id order equals
/// order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabeling {
    labels: Vec<u32>,
    sizes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GiantCluster {
    pub id: u32,
    pub size: usize,
    pub density: f64,
}

pub fn label_clusters(spec: &LatticeSpec, mask: &EdgeMask) -> ClusterLabeling {
    let n = spec.num_vertices();
    let mut uf = UnionFind::new(n);
    for s in spec.edge_slots() {
        if mask.is_open(s) {
            let (a, b) = spec.endpoints(s);
            uf.union(a, b);
        }
    }
    ClusterLabeling::from_union_find(&mut uf)
}

impl ClusterLabeling {
    pub(crate) fn from_union_find(uf: &mut UnionFind) -> Self {
        let n = uf.len();
        let mut root_label = vec![u32::MAX; n];
        let mut labels = vec![0u32; n];
        let mut sizes = Vec::new();
        for v in 0..n {
            let r = uf.find(v);
            if root_label[r] == u32::MAX {
                root_label[r] = sizes.len() as u32;
                sizes.push(0);
            }
            let l = root_label[r];
            labels[v] = l;
            sizes[l as usize] += 1;
        }
        ClusterLabeling { labels, sizes }
    }

    #[inline]
    pub fn label(&self, v: usize) -> u32 {
        self.labels[v]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.labels.len()
    }

    pub fn members(&self, id: u32) -> Vec<usize> {
        (0..self.labels.len()).filter(|&v| self.labels[v] == id).collect()
    }

    pub fn membership(&self, id: u32) -> Vec<bool> {
        self.labels.iter().map(|&l| l == id).collect()
    }
}

/// Largest cluster, ties broken by the smallest id.
pub fn giant_cluster(labeling: &ClusterLabeling) -> GiantCluster {
    let mut best = 0u32;
    for (id, &s) in labeling.sizes.iter().enumerate() {
        if s > labeling.sizes[best as usize] {
            best = id as u32;
        }
    }
    let size = labeling.sizes.get(best as usize).copied().unwrap_or(0);
    let density = size as f64 / labeling.num_vertices().max(1) as f64;
    if density < SUBCRITICAL_DENSITY {
        warn!("largest cluster has density {density:.3e}; the environment looks subcritical");
    }
    GiantCluster { id: best, size, density }
}
