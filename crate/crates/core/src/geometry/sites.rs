//! Site percolation fields and open-site counts along `l`-nearest-neighbour paths.

use std::collections::VecDeque;

use rand::Rng;

use super::boundary::{ball_offsets, l_neighbors};
use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SiteField {
    pub open: Vec<bool>,
    pub r: f64,
}

impl SiteField {
    pub fn sample(spec: &LatticeSpec, r: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Parameter(format!("site parameter {r} outside [0,1]")));
        }
        let mut g = rng::stream(seed, rng::domain::AUX, 0x5154_4553);
        let open = (0..spec.num_vertices()).map(|_| g.random::<f64>() < r).collect();
        Ok(SiteField { open, r })
    }

    pub fn constant(spec: &LatticeSpec, open: bool) -> Self {
        SiteField { open: vec![open; spec.num_vertices()], r: f64::from(u8::from(open)) }
    }
}

/// Minimum over `l`-nearest-neighbour paths from `x` to `y` of the number of
/// open sites visited, endpoints included. Runs a 0-1 BFS on node weights.
pub fn min_open_sites_on_path(field: &SiteField, spec: &LatticeSpec, x: usize, y: usize, l: f64) -> Result<u64> {
    spec.check_vertex(x)?;
    spec.check_vertex(y)?;
    if x == y {
        return Err(Error::Domain("path endpoints must differ".into()));
    }
    if l < 1.0 {
        return Err(Error::Parameter(format!("step bound {l} leaves the lattice disconnected")));
    }
    let offsets = ball_offsets(spec.dim(), l);
    let cost = |v: usize| u32::from(field.open[v]);
    let mut dist = vec![u32::MAX; spec.num_vertices()];
    let mut dq = VecDeque::new();
    dist[x] = cost(x);
    dq.push_back(x);
    while let Some(v) = dq.pop_front() {
        if v == y {
            break;
        }
        let dv = dist[v];
        for w in l_neighbors(spec, &offsets, v) {
            let nd = dv + cost(w);
            if nd < dist[w] {
                dist[w] = nd;
                if cost(w) == 0 {
                    dq.push_front(w);
                } else {
                    dq.push_back(w);
                }
            }
        }
    }
    Ok(u64::from(dist[y]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simple_paths_min(field: &SiteField, spec: &LatticeSpec, x: usize, y: usize, l: f64, max_len: usize) -> Option<u64> {
        let offsets = ball_offsets(spec.dim(), l);
        let mut best: Option<u64> = None;
        let mut on_path = vec![false; spec.num_vertices()];
        fn dfs(
            v: usize,
            y: usize,
            acc: u64,
            len: usize,
            max_len: usize,
            field: &SiteField,
            spec: &LatticeSpec,
            offsets: &[Vec<i64>],
            on_path: &mut Vec<bool>,
            best: &mut Option<u64>,
        ) {
            if v == y {
                *best = Some(best.map_or(acc, |b| b.min(acc)));
                return;
            }
            if len == max_len {
                return;
            }
            on_path[v] = true;
            let nbrs: Vec<usize> = l_neighbors(spec, offsets, v).collect();
            for w in nbrs {
                if !on_path[w] {
                    let c = acc + u64::from(field.open[w]);
                    dfs(w, y, c, len + 1, max_len, field, spec, offsets, on_path, best);
                }
            }
            on_path[v] = false;
        }
        dfs(x, y, u64::from(field.open[x]), 1, max_len, field, spec, &offsets, &mut on_path, &mut best);
        best
    }

    #[test]
    fn closed_field_costs_nothing() {
        let spec = LatticeSpec::free(2, 6).unwrap();
        let f = SiteField::constant(&spec, false);
        assert_eq!(min_open_sites_on_path(&f, &spec, 0, 35, 1.0).unwrap(), 0);
    }

    #[test]
    fn open_field_counts_vertices_of_a_geodesic() {
        let spec = LatticeSpec::free(2, 8).unwrap();
        let f = SiteField::constant(&spec, true);
        let x = spec.index(&[1, 1]).unwrap();
        let y = spec.index(&[5, 3]).unwrap();
        assert_eq!(min_open_sites_on_path(&f, &spec, x, y, 1.0).unwrap(), 7);
        assert!(min_open_sites_on_path(&f, &spec, x, x, 1.0).is_err());
    }

    #[test]
    fn exhaustive_on_tiny_boxes() {
        for seed in 0..12 {
            let spec = LatticeSpec::free(2, 4).unwrap();
            let f = SiteField::sample(&spec, 0.5, seed).unwrap();
            let got = min_open_sites_on_path(&f, &spec, 0, 15, 1.0).unwrap();
            assert_eq!(Some(got), simple_paths_min(&f, &spec, 0, 15, 1.0, 16));
            let spec = LatticeSpec::free(2, 3).unwrap();
            let f = SiteField::sample(&spec, 0.6, seed).unwrap();
            let got = min_open_sites_on_path(&f, &spec, 0, 8, 2f64.sqrt()).unwrap();
            assert_eq!(Some(got), simple_paths_min(&f, &spec, 0, 8, 2f64.sqrt(), 9));
        }
    }

    #[test]
    fn bounded_depth_search_on_larger_fields() {
        let spec = LatticeSpec::free(2, 15).unwrap();
        for seed in 0..10 {
            let f = SiteField::sample(&spec, 0.7, seed).unwrap();
            let x = spec.index(&[7, 7]).unwrap();
            for target in [[9, 7], [8, 9], [5, 6]] {
                let y = spec.index(&target).unwrap();
                let got = min_open_sites_on_path(&f, &spec, x, y, 1.0).unwrap();
                // optimal paths may be long, so paths up to 9 vertices only bound from above
                let bound = simple_paths_min(&f, &spec, x, y, 1.0, 9).unwrap();
                assert!(got <= bound);
                // and the answer never exceeds the direct route with all its sites
                assert!(got <= spec.l1_distance(x, y) + 1);
            }
        }
    }
}
