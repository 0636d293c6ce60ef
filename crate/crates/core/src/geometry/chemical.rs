//! Chemical distance on the strong cluster: unit steps are strong lattice
//! edges and jumps between two vertices bordering the same hole.

use std::collections::VecDeque;

use super::holes::{decompose, HoleStructure, NO_HOLE};
use crate::env::{EdgeMask, Environment};
use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;

pub const UNREACHABLE: u32 = u32::MAX;

pub struct ChemicalMetric<'a> {
    spec: &'a LatticeSpec,
    strong: EdgeMask,
    hs: &'a HoleStructure,
}

impl<'a> ChemicalMetric<'a> {
    pub fn new(env: &'a Environment, hs: &'a HoleStructure) -> Self {
        ChemicalMetric { spec: env.spec(), strong: env.threshold_mask(hs.xi), hs }
    }

    fn check(&self, x: usize) -> Result<()> {
        self.spec.check_vertex(x)?;
        if !self.hs.in_cxi[x] {
            return Err(Error::Domain(format!("vertex {x} is not in the strong cluster")));
        }
        Ok(())
    }

    /// Distances from `x` to every vertex; `UNREACHABLE` off the strong cluster.
    pub fn distances_from(&self, x: usize) -> Result<Vec<u32>> {
        self.check(x)?;
        let n = self.spec.num_vertices();
        let mut dist = vec![UNREACHABLE; n];
        let mut hole_used = vec![false; self.hs.holes.len()];
        let mut q = VecDeque::new();
        dist[x] = 0;
        q.push_back(x);
        while let Some(v) = q.pop_front() {
            let dv = dist[v] + 1;
            for (_, w, s) in self.spec.neighbors(v) {
                if self.strong.is_open(s) && dist[w] == UNREACHABLE {
                    dist[w] = dv;
                    q.push_back(w);
                }
                let h = self.hs.hole_of[w];
                if h != NO_HOLE && !hole_used[h as usize] {
                    // every vertex bordering this hole is one step away from v
                    hole_used[h as usize] = true;
                    for &z in &self.hs.holes.adjacency[h as usize] {
                        if dist[z] == UNREACHABLE {
                            dist[z] = dv;
                            q.push_back(z);
                        }
                    }
                }
            }
        }
        Ok(dist)
    }

    pub fn distance(&self, x: usize, y: usize) -> Result<Option<u64>> {
        self.check(y)?;
        let d = self.distances_from(x)?[y];
        Ok((d != UNREACHABLE).then_some(u64::from(d)))
    }
}

/// Chemical distance between two strong-cluster vertices, `None` when no
/// path exists inside the finite volume.
pub fn chemical_distance(env: &Environment, xi: f64, x: usize, y: usize) -> Result<Option<u64>> {
    let hs = decompose(env, xi)?;
    ChemicalMetric::new(env, &hs).distance(x, y)
}
