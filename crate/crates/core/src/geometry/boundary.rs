//! Interior boundaries and `l`-connectivity of vertex sets.

use std::collections::VecDeque;

use super::union_find::UnionFind;
use crate::lattice::LatticeSpec;

/// `{x in A : some lattice neighbour of x is not in A}`, sorted.
pub fn interior_boundary(a: &[usize], spec: &LatticeSpec) -> Vec<usize> {
    let mut inside = vec![false; spec.num_vertices()];
    for &v in a {
        inside[v] = true;
    }
    let mut out: Vec<usize> = a
        .iter()
        .copied()
        .filter(|&x| spec.neighbors(x).any(|(_, y, _)| !inside[y]))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Nonzero integer offsets of Euclidean norm at most `l`.
pub fn ball_offsets(dim: usize, l: f64) -> Vec<Vec<i64>> {
    let r = l.floor() as i64;
    let l2 = l * l;
    let mut out = Vec::new();
    let mut cur = vec![-r; dim];
    loop {
        let n2: i64 = cur.iter().map(|c| c * c).sum();
        if n2 > 0 && (n2 as f64) <= l2 + 1e-12 {
            out.push(cur.clone());
        }
        let mut k = 0;
        loop {
            if k == dim {
                return out;
            }
            cur[k] += 1;
            if cur[k] <= r {
                break;
            }
            cur[k] = -r;
            k += 1;
        }
    }
}

/// Vertices within Euclidean distance `l` of `v` (closed ball, `v` excluded).
pub(crate) fn l_neighbors<'a>(
    spec: &'a LatticeSpec,
    offsets: &'a [Vec<i64>],
    v: usize,
) -> impl Iterator<Item = usize> + 'a {
    let base: Vec<i64> = spec.coords(v).into_iter().map(|c| c as i64).collect();
    offsets.iter().filter_map(move |off| {
        let p: Vec<i64> = base.iter().zip(off).map(|(b, o)| b + o).collect();
        spec.index_signed(&p).ok().filter(|&w| w != v)
    })
}

/// Partition of `s` where two points are adjacent when their Euclidean
/// distance is at most `l`. Components are sorted and listed by smallest vertex.
pub fn l_connected_components(s: &[usize], spec: &LatticeSpec, l: f64) -> Vec<Vec<usize>> {
    let n = spec.num_vertices();
    let mut pos = vec![u32::MAX; n];
    let mut verts: Vec<usize> = s.to_vec();
    verts.sort_unstable();
    verts.dedup();
    for (i, &v) in verts.iter().enumerate() {
        pos[v] = i as u32;
    }
    let offsets = ball_offsets(spec.dim(), l);
    let mut uf = UnionFind::new(verts.len());
    for (i, &v) in verts.iter().enumerate() {
        for w in l_neighbors(spec, &offsets, v) {
            if pos[w] != u32::MAX {
                uf.union(i, pos[w] as usize);
            }
        }
    }
    let mut comp_of_root = vec![usize::MAX; verts.len()];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    for (i, &v) in verts.iter().enumerate() {
        let r = uf.find(i);
        if comp_of_root[r] == usize::MAX {
            comp_of_root[r] = comps.len();
            comps.push(Vec::new());
        }
        comps[comp_of_root[r]].push(v);
    }
    comps
}

/// Lattice-connected components of the vertices where `member` is false.
pub fn complement_components(spec: &LatticeSpec, member: &[bool]) -> Vec<Vec<usize>> {
    let n = spec.num_vertices();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    let mut q = VecDeque::new();
    for s in 0..n {
        if member[s] || seen[s] {
            continue;
        }
        seen[s] = true;
        q.push_back(s);
        let mut comp = vec![s];
        while let Some(v) = q.pop_front() {
            for (_, w, _) in spec.neighbors(v) {
                if !member[w] && !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                    q.push_back(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}
