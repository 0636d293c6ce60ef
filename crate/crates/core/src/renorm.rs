//! Block coarse-graining of a pair of nested percolation configurations into
//! black, grey, pure-white and immaculate boxes.

use std::collections::{HashMap, VecDeque};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::EdgeMask;
use crate::error::{Error, Result};
use crate::geometry::{giant_cluster, label_clusters, HoleSet, UnionFind};
use crate::lattice::{BoxRegion, Boundary, LatticeSpec};
use crate::rng::{self, domain};
use crate::stats::{binomial_ci, mean_se, BinomialCi, MeanSe};

/// Partition of the lattice into boxes `B_i` of side `2N + 1` centred at
/// `(2N + 1) i`, with enlarged boxes `B'_i` of side `5N/2 + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxGrid {
    spec: LatticeSpec,
    scale: usize,
    per_axis: usize,
    wrap: bool,
}

impl BoxGrid {
    pub fn new(spec: &LatticeSpec, scale: usize) -> Result<Self> {
        if scale < 4 || scale % 4 != 0 {
            return Err(Error::Parameter(format!("block scale must be a positive multiple of 4, got {scale}")));
        }
        let per_axis = spec.side() / (2 * scale + 1);
        if per_axis < 3 {
            return Err(Error::Parameter(format!(
                "side {} holds {per_axis} blocks of side {} per axis, need at least 3",
                spec.side(),
                2 * scale + 1
            )));
        }
        let wrap = spec.boundary() == Boundary::Torus && spec.side() % (2 * scale + 1) == 0;
        Ok(BoxGrid { spec: spec.clone(), scale, per_axis, wrap })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    /// The block scale `N`.
    pub fn scale(&self) -> usize {
        self.scale
    }

    pub fn blocks_per_axis(&self) -> usize {
        self.per_axis
    }

    pub fn num_blocks(&self) -> usize {
        self.per_axis.pow(self.spec.dim() as u32)
    }

    /// Whether the block grid itself is periodic.
    pub fn wraps(&self) -> bool {
        self.wrap
    }

    pub fn block_side(&self) -> usize {
        2 * self.scale + 1
    }

    pub fn enlarged_side(&self) -> usize {
        5 * self.scale / 2 + 1
    }

    pub fn block_coords(&self, b: usize) -> Vec<usize> {
        let mut r = b;
        (0..self.spec.dim())
            .map(|_| {
                let c = r % self.per_axis;
                r /= self.per_axis;
                c
            })
            .collect()
    }

    pub fn block_index(&self, coords: &[usize]) -> usize {
        coords.iter().rev().fold(0, |acc, &c| acc * self.per_axis + c)
    }

    /// Lattice coordinates of the centre of block `b`.
    pub fn center(&self, b: usize) -> Vec<i64> {
        let s = self.block_side() as i64;
        self.block_coords(b).iter().map(|&c| c as i64 * s + self.scale as i64).collect()
    }

    /// Block containing vertex `v`, if any.
    pub fn block_of(&self, v: usize) -> Option<usize> {
        let s = self.block_side();
        let mut coords = Vec::with_capacity(self.spec.dim());
        for k in 0..self.spec.dim() {
            let c = self.spec.coord(v, k) / s;
            if c >= self.per_axis {
                return None;
            }
            coords.push(c);
        }
        Some(self.block_index(&coords))
    }

    fn region(&self, b: usize, half: i64) -> BoxRegion {
        let c = self.center(b);
        BoxRegion { lo: c.iter().map(|x| x - half).collect(), hi: c.iter().map(|x| x + half).collect() }
    }

    pub fn block_region(&self, b: usize) -> BoxRegion {
        self.region(b, self.scale as i64)
    }

    pub fn enlarged_region(&self, b: usize) -> BoxRegion {
        self.region(b, (5 * self.scale / 4) as i64)
    }

    /// `B'_b` lies inside the lattice, or wraps consistently on a torus.
    pub fn enlarged_complete(&self, b: usize) -> bool {
        if self.wrap {
            return true;
        }
        let r = self.enlarged_region(b);
        let side = self.spec.side() as i64;
        r.lo.iter().all(|&x| x >= 0) && r.hi.iter().all(|&x| x < side)
    }

    /// Blocks `j != b` with `|j - b|_inf <= 1`; exactly the blocks whose box
    /// meets `B'_b`.
    pub fn surrounding(&self, b: usize) -> Vec<usize> {
        let d = self.spec.dim();
        let c = self.block_coords(b);
        let mut out = Vec::new();
        for code in 0..3usize.pow(d as u32) {
            let mut r = code;
            let mut coords = Vec::with_capacity(d);
            let mut ok = true;
            let mut is_self = true;
            for &ck in &c {
                let off = (r % 3) as i64 - 1;
                r /= 3;
                is_self &= off == 0;
                let mut x = ck as i64 + off;
                if self.wrap {
                    x = x.rem_euclid(self.per_axis as i64);
                } else if x < 0 || x >= self.per_axis as i64 {
                    ok = false;
                }
                coords.push(x as usize);
            }
            if ok && !is_self {
                out.push(self.block_index(&coords));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Blocks at `|j - b|_1 = 1`.
    pub fn adjacent(&self, b: usize) -> Vec<usize> {
        let c = self.block_coords(b);
        let mut out = Vec::new();
        for k in 0..c.len() {
            for off in [-1i64, 1] {
                let mut x = c[k] as i64 + off;
                if self.wrap {
                    x = x.rem_euclid(self.per_axis as i64);
                } else if x < 0 || x >= self.per_axis as i64 {
                    continue;
                }
                let mut cc = c.clone();
                cc[k] = x as usize;
                out.push(self.block_index(&cc));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxColor {
    Black,
    Grey,
    PureWhite,
}

impl BoxColor {
    pub fn is_white(self) -> bool {
        self != BoxColor::Black
    }
}

/// Reading of the uniqueness clause in the crossing event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Uniqueness {
    /// Exactly one cluster of the enlarged box crosses it.
    #[default]
    UniqueCrossing,
    /// Exactly one cluster with an edge; all other vertices are isolated.
    UniqueCluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub uniqueness: Uniqueness,
    /// Check every subbox of every admissible side instead of the strided grid.
    pub exhaustive_subboxes: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxClassification {
    pub grid: BoxGrid,
    pub colors: Vec<BoxColor>,
    pub immaculate: Vec<bool>,
    /// Crossing cluster `K_b` of each white block, as sorted lattice vertices.
    pub crossing: Vec<Option<Vec<usize>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorFractions {
    pub blocks: usize,
    pub white: f64,
    pub pure_white: f64,
    pub immaculate: f64,
}

impl BoxClassification {
    pub fn num_blocks(&self) -> usize {
        self.colors.len()
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let white = self.colors.iter().filter(|c| c.is_white()).count();
        let pure = self.colors.iter().filter(|&&c| c == BoxColor::PureWhite).count();
        let imm = self.immaculate.iter().filter(|&&x| x).count();
        (white, pure, imm)
    }

    pub fn fractions(&self) -> ColorFractions {
        let (w, p, i) = self.counts();
        let n = self.num_blocks() as f64;
        ColorFractions { blocks: self.num_blocks(), white: w as f64 / n, pure_white: p as f64 / n, immaculate: i as f64 / n }
    }

    /// Largest nearest-neighbour cluster of immaculate blocks, smallest
    /// block index first on ties; sorted.
    pub fn giant_immaculate_component(&self) -> Vec<usize> {
        let n = self.num_blocks();
        let mut seen = vec![false; n];
        let mut best: Vec<usize> = Vec::new();
        for s in 0..n {
            if !self.immaculate[s] || seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut queue = VecDeque::from([s]);
            while let Some(b) = queue.pop_front() {
                for j in self.grid.adjacent(b) {
                    if self.immaculate[j] && !seen[j] {
                        seen[j] = true;
                        comp.push(j);
                        queue.push_back(j);
                    }
                }
            }
            if comp.len() > best.len() {
                best = comp;
            }
        }
        best.sort_unstable();
        best
    }
}

/// Local copy of a box with its own coordinates.
struct LocalBox {
    side: usize,
    dim: usize,
    vertices: Vec<usize>,
    /// `edges[i]` lists `(local neighbour, slot)` in positive directions.
    edges: Vec<Vec<(usize, usize)>>,
}

impl LocalBox {
    fn new(spec: &LatticeSpec, region: &BoxRegion) -> Result<Self> {
        let dim = spec.dim();
        let side = (region.hi[0] - region.lo[0] + 1) as usize;
        let vertices = region.vertices(spec)?;
        let mut edges = vec![Vec::new(); vertices.len()];
        let mut stride = 1;
        for k in 0..dim {
            for (i, e) in edges.iter_mut().enumerate() {
                if (i / stride) % side + 1 < side {
                    let v = vertices[i];
                    if let Some(slot) = spec.slot(v, (2 * k) as u8) {
                        e.push((i + stride, slot));
                    }
                }
            }
            stride *= side;
        }
        Ok(LocalBox { side, dim, vertices, edges })
    }

    fn coord(&self, i: usize, k: usize) -> usize {
        (i / self.side.pow(k as u32)) % self.side
    }

    fn clusters(&self, open: &EdgeMask) -> UnionFind {
        let mut uf = UnionFind::new(self.vertices.len());
        for (i, es) in self.edges.iter().enumerate() {
            for &(j, slot) in es {
                if open.is_open(slot) {
                    uf.union(i, j);
                }
            }
        }
        uf
    }

    /// Per cluster root: `(lo, hi)` coordinate extents and size.
    fn extents(&self, uf: &mut UnionFind) -> Vec<Option<(Vec<usize>, Vec<usize>, usize)>> {
        let n = self.vertices.len();
        let mut ext: Vec<Option<(Vec<usize>, Vec<usize>, usize)>> = vec![None; n];
        for i in 0..n {
            let r = uf.find(i);
            let e = ext[r].get_or_insert_with(|| (vec![usize::MAX; self.dim], vec![0; self.dim], 0));
            for k in 0..self.dim {
                let c = self.coord(i, k);
                e.0[k] = e.0[k].min(c);
                e.1[k] = e.1[k].max(c);
            }
            e.2 += 1;
        }
        ext
    }
}

/// Whether the vertices of `member` (local indices) contain one connected
/// piece crossing the subbox `[lo, lo + q)` in every axis.
fn crosses_subbox(lb: &LocalBox, open: &EdgeMask, member: &[bool], lo: &[usize], q: usize) -> bool {
    let d = lb.dim;
    let inside = |i: usize| (0..d).all(|k| {
        let c = lb.coord(i, k);
        c >= lo[k] && c < lo[k] + q
    });
    let total = q.pow(d as u32);
    let idx: Vec<usize> = (0..total)
        .map(|code| {
            let mut r = code;
            (0..d)
                .map(|k| {
                    let c = r % q;
                    r /= q;
                    (lo[k] + c) * lb.side.pow(k as u32)
                })
                .sum()
        })
        .collect();
    let pos: HashMap<usize, usize> = idx.iter().enumerate().map(|(a, &i)| (i, a)).collect();
    let mut uf = UnionFind::new(total);
    for (a, &i) in idx.iter().enumerate() {
        if !member[i] {
            continue;
        }
        for &(j, slot) in &lb.edges[i] {
            if member[j] && inside(j) && open.is_open(slot) {
                uf.union(a, pos[&j]);
            }
        }
    }
    let mut ext: HashMap<usize, (Vec<usize>, Vec<usize>)> = HashMap::new();
    for (a, &i) in idx.iter().enumerate() {
        if !member[i] {
            continue;
        }
        let r = uf.find(a);
        let e = ext.entry(r).or_insert_with(|| (vec![usize::MAX; d], vec![0; d]));
        for k in 0..d {
            let c = lb.coord(i, k) - lo[k];
            e.0[k] = e.0[k].min(c);
            e.1[k] = e.1[k].max(c);
        }
    }
    ext.values().any(|(l, h)| l.iter().all(|&x| x == 0) && h.iter().all(|&x| x == q - 1))
}

fn anchors(side: usize, q: usize, stride: usize) -> Vec<usize> {
    let mut a: Vec<usize> = (0..=side - q).step_by(stride).collect();
    if *a.last().unwrap() != side - q {
        a.push(side - q);
    }
    a
}

fn all_subboxes_crossed(lb: &LocalBox, open: &EdgeMask, member: &[bool], scale: usize, exhaustive: bool) -> bool {
    let d = lb.dim;
    let (sides, stride): (Vec<usize>, usize) = if exhaustive {
        ((((scale / 10) + 1).max(2)..=lb.side).collect(), 1)
    } else {
        (vec![(scale.div_ceil(10) + 1).min(lb.side)], scale.div_ceil(20))
    };
    for q in sides {
        let an = anchors(lb.side, q, stride);
        let count = an.len().pow(d as u32);
        for code in 0..count {
            let mut r = code;
            let lo: Vec<usize> = (0..d)
                .map(|_| {
                    let x = an[r % an.len()];
                    r /= an.len();
                    x
                })
                .collect();
            if !crosses_subbox(lb, open, member, &lo, q) {
                return false;
            }
        }
    }
    true
}

/// Crossing cluster of the enlarged box if the crossing event holds.
fn crossing_event(
    spec: &LatticeSpec,
    grid: &BoxGrid,
    alpha: &EdgeMask,
    b: usize,
    opts: &ClassifyOptions,
) -> Result<Option<Vec<usize>>> {
    let lb = LocalBox::new(spec, &grid.enlarged_region(b))?;
    let mut uf = lb.clusters(alpha);
    let ext = lb.extents(&mut uf);
    let s = lb.side;
    let scale = grid.scale() as f64;
    let mut crossing_root = None;
    for (r, e) in ext.iter().enumerate() {
        let Some((lo, hi, _)) = e else { continue };
        let crosses = lo.iter().all(|&x| x == 0) && hi.iter().all(|&x| x == s - 1);
        if crosses {
            if crossing_root.is_some() {
                return Ok(None);
            }
            crossing_root = Some(r);
        }
    }
    let Some(k) = crossing_root else { return Ok(None) };
    for (r, e) in ext.iter().enumerate() {
        let Some((lo, hi, size)) = e else { continue };
        if r == k {
            continue;
        }
        let diameter = (0..lb.dim).map(|a| hi[a] - lo[a]).max().unwrap_or(0) as f64;
        let bad = match opts.uniqueness {
            Uniqueness::UniqueCrossing => 10.0 * diameter > scale,
            Uniqueness::UniqueCluster => *size > 1,
        };
        if bad {
            return Ok(None);
        }
    }
    let member: Vec<bool> = (0..lb.vertices.len()).map(|i| uf.find(i) == k).collect();
    if !all_subboxes_crossed(&lb, alpha, &member, grid.scale(), opts.exhaustive_subboxes) {
        return Ok(None);
    }
    let mut verts: Vec<usize> = (0..lb.vertices.len()).filter(|&i| member[i]).map(|i| lb.vertices[i]).collect();
    verts.sort_unstable();
    Ok(Some(verts))
}

/// Slots of edges with at least one endpoint in the box.
fn box_edges(spec: &LatticeSpec, region: &BoxRegion) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for v in region.vertices(spec)? {
        for (_, _, slot) in spec.neighbors(v) {
            out.push(slot);
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Colours every block of the grid of scale `scale`.
pub fn classify_boxes(
    spec: &LatticeSpec,
    alpha: &EdgeMask,
    alpha_prime: &EdgeMask,
    scale: usize,
    opts: ClassifyOptions,
) -> Result<BoxClassification> {
    if alpha.len() != spec.num_slots() || alpha_prime.len() != spec.num_slots() {
        return Err(Error::Parameter("edge masks do not match the lattice".into()));
    }
    if !alpha_prime.is_subset_of(alpha) {
        return Err(Error::Consistency("the strong configuration is not contained in the open one".into()));
    }
    let grid = BoxGrid::new(spec, scale)?;
    let labels = label_clusters(spec, alpha);
    let giant = giant_cluster(&labels);
    let in_giant = |v: usize| giant.size > 1 && labels.label(v) == giant.id;
    let results: Vec<(BoxColor, Option<Vec<usize>>)> = (0..grid.num_blocks())
        .into_par_iter()
        .map(|b| -> Result<(BoxColor, Option<Vec<usize>>)> {
            if !grid.enlarged_complete(b) {
                return Ok((BoxColor::Black, None));
            }
            let edges = box_edges(spec, &grid.block_region(b))?;
            if !edges.iter().any(|&s| alpha.is_open(s)) {
                return Ok((BoxColor::Black, None));
            }
            let Some(k) = crossing_event(spec, &grid, alpha, b, &opts)? else {
                return Ok((BoxColor::Black, None));
            };
            let grey = edges.iter().any(|&s| {
                let (x, y) = spec.endpoints(s);
                alpha.is_open(s) && !alpha_prime.is_open(s) && in_giant(x) && in_giant(y)
            });
            Ok((if grey { BoxColor::Grey } else { BoxColor::PureWhite }, Some(k)))
        })
        .collect::<Result<_>>()?;
    let (colors, crossing): (Vec<BoxColor>, Vec<Option<Vec<usize>>>) = results.into_iter().unzip();
    let immaculate = (0..grid.num_blocks())
        .map(|b| {
            colors[b] == BoxColor::PureWhite
                && grid.surrounding(b).len() == 3usize.pow(spec.dim() as u32) - 1
                && grid.surrounding(b).iter().all(|&j| colors[j] == BoxColor::PureWhite)
        })
        .collect();
    Ok(BoxClassification { grid, colors, immaculate, crossing })
}

/// Outcome of checking that no hole meets the giant immaculate component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FootprintReport {
    pub holes_checked: usize,
    pub giant_immaculate_blocks: usize,
    /// Indices of holes whose block footprint meets the giant component.
    pub violations: Vec<usize>,
}

/// For every hole with a vertex in `window` (all holes if `None`), checks
/// that the blocks it meets avoid the giant immaculate component.
pub fn check_hole_footprints(class: &BoxClassification, holes: &HoleSet, window: Option<&[bool]>) -> FootprintReport {
    let giant = class.giant_immaculate_component();
    let mut in_giant = vec![false; class.num_blocks()];
    for &b in &giant {
        in_giant[b] = true;
    }
    let mut checked = 0;
    let mut violations = Vec::new();
    for (h, hole) in holes.holes.iter().enumerate() {
        if let Some(w) = window {
            if !hole.iter().any(|&v| w[v]) {
                continue;
            }
        }
        checked += 1;
        if hole.iter().filter_map(|&v| class.grid.block_of(v)).any(|b| in_giant[b]) {
            violations.push(h);
        }
    }
    FootprintReport { holes_checked: checked, giant_immaculate_blocks: giant.len(), violations }
}

/// Whether all `targets` lie in one cluster of `open` restricted to `region`.
pub fn connected_within(spec: &LatticeSpec, open: &EdgeMask, region: &[bool], targets: &[usize]) -> bool {
    let Some(&first) = targets.first() else { return true };
    if targets.iter().any(|&t| !region[t]) {
        return false;
    }
    let mut seen = vec![false; spec.num_vertices()];
    seen[first] = true;
    let mut queue = VecDeque::from([first]);
    while let Some(v) = queue.pop_front() {
        for (_, w, slot) in spec.neighbors(v) {
            if region[w] && !seen[w] && open.is_open(slot) {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    targets.iter().all(|&t| seen[t])
}

/// Giant-cluster vertices of white block `b` are connected inside `B'_b`.
pub fn check_fact_i(class: &BoxClassification, alpha: &EdgeMask, in_giant: &[bool], b: usize) -> Result<bool> {
    let spec = class.grid.spec();
    let targets: Vec<usize> = class.grid.block_region(b).vertices(spec)?.into_iter().filter(|&v| in_giant[v]).collect();
    let region = class.grid.enlarged_region(b).mask(spec)?;
    Ok(connected_within(spec, alpha, &region, &targets))
}

/// Crossing clusters of adjacent white blocks are connected inside `B'_a ∪ B'_b`.
pub fn check_fact_ii(class: &BoxClassification, alpha: &EdgeMask, a: usize, b: usize) -> Result<bool> {
    let spec = class.grid.spec();
    let (Some(ka), Some(kb)) = (&class.crossing[a], &class.crossing[b]) else {
        return Err(Error::Domain(format!("blocks {a} and {b} are not both white")));
    };
    let mut region = class.grid.enlarged_region(a).mask(spec)?;
    for (r, x) in region.iter_mut().zip(class.grid.enlarged_region(b).mask(spec)?) {
        *r |= x;
    }
    let targets = [ka[0], kb[0]];
    Ok(connected_within(spec, alpha, &region, &targets))
}

/// Empirical block fractions over an ensemble, with the theoretical
/// relations `p'(N) = p(N) p^{e_N(d)}` and `p''(N) = p'(N)^{3^d}` evaluated at
/// the empirical `p(N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormalizedParams {
    pub scale: usize,
    pub q: f64,
    pub p: f64,
    pub replicas: usize,
    pub white: BinomialCi,
    pub pure_white: BinomialCi,
    pub immaculate: BinomialCi,
    /// Replica means with standard errors; `None` for a single replica.
    pub white_replicas: Option<MeanSe>,
    pub pure_white_replicas: Option<MeanSe>,
    pub immaculate_replicas: Option<MeanSe>,
    /// Number of edges in a box of side `2N + 1`.
    pub edges_per_box: f64,
    pub theoretical_pure_white: f64,
    pub theoretical_immaculate: f64,
}

/// Number of edges `d (2N+1)^{d-1} 2N` in a box of side `2N + 1`.
pub fn edges_in_box(dim: usize, scale: usize) -> f64 {
    dim as f64 * ((2 * scale + 1) as f64).powi(dim as i32 - 1) * (2 * scale) as f64
}

/// Samples `alpha ~ Bernoulli(q)` bond percolation and keeps each open edge
/// in `alpha'` with probability `p`.
pub fn sample_nested_masks(spec: &LatticeSpec, q: f64, p: f64, seed: u64, replica: u64) -> Result<(EdgeMask, EdgeMask)> {
    if !(0.0..=1.0).contains(&q) || !(0.0..=1.0).contains(&p) {
        return Err(Error::Parameter(format!("probabilities must lie in [0, 1], got q={q}, p={p}")));
    }
    let mut rng = rng::stream(seed, domain::REPLICA_ENV, replica);
    let mut a = EdgeMask::all(spec, false);
    let mut b = EdgeMask::all(spec, false);
    for slot in 0..spec.num_slots() {
        let u: f64 = rng.random();
        let w: f64 = rng.random();
        if spec.slot_exists(slot) && u < q {
            a.set(slot, true);
            b.set(slot, w < p);
        }
    }
    Ok((a, b))
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_renormalized_params(
    spec: &LatticeSpec,
    q: f64,
    p: f64,
    scale: usize,
    replicas: usize,
    seed: u64,
    opts: ClassifyOptions,
    level: f64,
) -> Result<RenormalizedParams> {
    if replicas == 0 {
        return Err(Error::Parameter("need at least one replica".into()));
    }
    let per: Vec<BoxClassification> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let (a, b) = sample_nested_masks(spec, q, p, seed, r as u64)?;
            classify_boxes(spec, &a, &b, scale, opts)
        })
        .collect::<Result<_>>()?;
    let blocks = per[0].num_blocks() as u64;
    let total = blocks * replicas as u64;
    let (mut w, mut pw, mut im) = (0u64, 0u64, 0u64);
    let mut fr = (Vec::new(), Vec::new(), Vec::new());
    for c in &per {
        let (a, b, i) = c.counts();
        w += a as u64;
        pw += b as u64;
        im += i as u64;
        let f = c.fractions();
        fr.0.push(f.white);
        fr.1.push(f.pure_white);
        fr.2.push(f.immaculate);
    }
    let white = binomial_ci(w, total, level)?;
    let e = edges_in_box(spec.dim(), scale);
    let tp = white.estimate * p.powf(e);
    Ok(RenormalizedParams {
        scale,
        q,
        p,
        replicas,
        white,
        pure_white: binomial_ci(pw, total, level)?,
        immaculate: binomial_ci(im, total, level)?,
        white_replicas: mean_se(&fr.0).ok(),
        pure_white_replicas: mean_se(&fr.1).ok(),
        immaculate_replicas: mean_se(&fr.2).ok(),
        edges_per_box: e,
        theoretical_pure_white: tp,
        theoretical_immaculate: tp.powi(3i32.pow(spec.dim() as u32)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> LatticeSpec {
        LatticeSpec::torus(2, 27).unwrap()
    }

    #[test]
    fn grid_tiles_the_torus() {
        let s = spec();
        let g = BoxGrid::new(&s, 4).unwrap();
        assert!(g.wraps());
        assert_eq!(g.num_blocks(), 9);
        assert_eq!(g.enlarged_side(), 11);
        let mut count = vec![0; 9];
        for v in 0..s.num_vertices() {
            count[g.block_of(v).unwrap()] += 1;
        }
        assert!(count.iter().all(|&c| c == 81));
        for b in 0..9 {
            let blk = g.block_region(b).mask(&s).unwrap();
            assert!(blk.iter().enumerate().all(|(v, &m)| m == (g.block_of(v) == Some(b))));
            let big = g.enlarged_region(b).mask(&s).unwrap();
            assert!(blk.iter().zip(&big).all(|(a, b)| !a || *b));
            assert_eq!(g.surrounding(b).len(), 8);
            // B'_b meets exactly the surrounding blocks
            let mut met: Vec<usize> = (0..s.num_vertices()).filter(|&v| big[v]).filter_map(|v| g.block_of(v)).collect();
            met.sort_unstable();
            met.dedup();
            let mut expect = g.surrounding(b);
            expect.push(b);
            expect.sort_unstable();
            assert_eq!(met, expect);
        }
    }

    #[test]
    fn rejects_bad_scales() {
        assert!(BoxGrid::new(&spec(), 6).is_err());
        assert!(BoxGrid::new(&spec(), 8).is_err());
    }

    #[test]
    fn all_open_is_immaculate() {
        let s = spec();
        let m = EdgeMask::all(&s, true);
        let c = classify_boxes(&s, &m, &m, 4, ClassifyOptions::default()).unwrap();
        assert!(c.immaculate.iter().all(|&x| x));
        assert!(c.crossing.iter().all(|k| k.as_ref().unwrap().len() == 121));
        let ex = classify_boxes(&s, &m, &m, 4, ClassifyOptions { exhaustive_subboxes: true, ..Default::default() }).unwrap();
        assert!(ex.immaculate.iter().all(|&x| x));
    }

    #[test]
    fn empty_is_black() {
        let s = spec();
        let m = EdgeMask::all(&s, false);
        let c = classify_boxes(&s, &m, &m, 4, ClassifyOptions::default()).unwrap();
        assert!(c.colors.iter().all(|&x| x == BoxColor::Black));
    }

    #[test]
    fn one_missing_strong_edge() {
        let s = spec();
        let a = EdgeMask::all(&s, true);
        let mut b = a.clone();
        let g = BoxGrid::new(&s, 4).unwrap();
        let i = g.block_index(&[1, 1]);
        let center = s.index_signed(&g.center(i)).unwrap();
        b.set(s.slot(center, 0).unwrap(), false);
        let c = classify_boxes(&s, &a, &b, 4, ClassifyOptions::default()).unwrap();
        for blk in 0..9 {
            assert_eq!(c.colors[blk] == BoxColor::Grey, blk == i);
            // every other block is a neighbour of i on the 3 x 3 periodic grid
            assert!(!c.immaculate[blk]);
        }
        assert!(matches!(classify_boxes(&s, &b, &a, 4, ClassifyOptions::default()), Err(Error::Consistency(_))));
    }

    #[test]
    fn grey_spreads_only_to_the_surrounding_blocks() {
        let s = LatticeSpec::torus(2, 45).unwrap();
        let a = EdgeMask::all(&s, true);
        let mut b = a.clone();
        let g = BoxGrid::new(&s, 4).unwrap();
        let i = g.block_index(&[2, 2]);
        let center = s.index_signed(&g.center(i)).unwrap();
        b.set(s.slot(center, 2).unwrap(), false);
        let c = classify_boxes(&s, &a, &b, 4, ClassifyOptions::default()).unwrap();
        let mut lost = g.surrounding(i);
        lost.push(i);
        for blk in 0..g.num_blocks() {
            assert_eq!(c.immaculate[blk], !lost.contains(&blk), "block {blk}");
        }
        assert_eq!(c.giant_immaculate_component().len(), 16);
    }

    #[test]
    fn edges_in_box_counts() {
        // side 3 square: 2 * 3 * 2 = 12 edges
        assert_eq!(edges_in_box(2, 1), 12.0);
        assert_eq!(edges_in_box(3, 4), 3.0 * 81.0 * 8.0);
    }
}
