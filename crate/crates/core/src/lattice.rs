//! Finite boxes and tori of `Z^d`.
//!
//! Vertices are numbered with the first coordinate varying fastest. The edge
//! from `x` to `x + e_k` lives in slot `x * d + k`; on a free box the slots of
//! edges that would leave the box exist but are never iterated.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Free,
    Torus,
}

impl Boundary {
    pub fn code(self) -> u8 {
        match self {
            Boundary::Free => 0,
            Boundary::Torus => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Boundary::Free),
            1 => Ok(Boundary::Torus),
            other => Err(Error::Format(format!("unknown boundary code {other}"))),
        }
    }
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "free" => Ok(Boundary::Free),
            "torus" => Ok(Boundary::Torus),
            other => Err(Error::Parameter(format!("unknown boundary '{other}'"))),
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Free => "free",
            Boundary::Torus => "torus",
        })
    }
}

/// A direction index in `0..2d`: axis `dir / 2`, positive when `dir` is even.
pub type Direction = u8;

#[inline]
pub fn axis_of(dir: Direction) -> usize {
    (dir / 2) as usize
}

#[inline]
pub fn is_positive(dir: Direction) -> bool {
    dir % 2 == 0
}

#[inline]
pub fn opposite(dir: Direction) -> Direction {
    dir ^ 1
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct LatticeSpec {
    dim: usize,
    side: usize,
    boundary: Boundary,
    strides: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    dim: usize,
    side: usize,
    boundary: Boundary,
}

impl TryFrom<RawSpec> for LatticeSpec {
    type Error = Error;
    fn try_from(r: RawSpec) -> Result<Self> {
        LatticeSpec::new(r.dim, r.side, r.boundary)
    }
}

impl From<LatticeSpec> for RawSpec {
    fn from(s: LatticeSpec) -> Self {
        RawSpec { dim: s.dim, side: s.side, boundary: s.boundary }
    }
}

impl LatticeSpec {
    pub fn new(dim: usize, side: usize, boundary: Boundary) -> Result<Self> {
        if !(2..=8).contains(&dim) {
            return Err(Error::Parameter(format!("dimension must lie in 2..=8, got {dim}")));
        }
        if side < 2 {
            return Err(Error::Parameter(format!("side must be at least 2, got {side}")));
        }
        let mut strides = Vec::with_capacity(dim);
        let mut s = 1usize;
        for _ in 0..dim {
            strides.push(s);
            s = s
                .checked_mul(side)
                .ok_or_else(|| Error::Parameter("lattice too large".into()))?;
        }
        s.checked_mul(dim)
            .ok_or_else(|| Error::Parameter("lattice too large".into()))?;
        Ok(LatticeSpec { dim, side, boundary, strides })
    }

    pub fn torus(dim: usize, side: usize) -> Result<Self> {
        Self::new(dim, side, Boundary::Torus)
    }

    pub fn free(dim: usize, side: usize) -> Result<Self> {
        Self::new(dim, side, Boundary::Free)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    #[inline]
    pub fn num_vertices(&self) -> usize {
        self.strides[self.dim - 1] * self.side
    }

    /// Number of slots in the edge array, `d * L^d`.
    #[inline]
    pub fn num_slots(&self) -> usize {
        self.num_vertices() * self.dim
    }

    pub fn num_edges(&self) -> usize {
        match self.boundary {
            Boundary::Torus => self.num_slots(),
            Boundary::Free => self.dim * self.num_vertices() / self.side * (self.side - 1),
        }
    }

    #[inline]
    pub fn coord(&self, v: usize, axis: usize) -> usize {
        (v / self.strides[axis]) % self.side
    }

    pub fn coords(&self, v: usize) -> Vec<usize> {
        (0..self.dim).map(|k| self.coord(v, k)).collect()
    }

    pub fn index(&self, coords: &[usize]) -> Result<usize> {
        if coords.len() != self.dim {
            return Err(Error::Index(format!(
                "expected {} coordinates, got {}",
                self.dim,
                coords.len()
            )));
        }
        let mut v = 0;
        for (k, &c) in coords.iter().enumerate() {
            if c >= self.side {
                return Err(Error::Index(format!("coordinate {c} outside 0..{}", self.side)));
            }
            v += c * self.strides[k];
        }
        Ok(v)
    }

    /// Index of a point given in signed coordinates, wrapped on a torus.
    pub fn index_signed(&self, coords: &[i64]) -> Result<usize> {
        let l = self.side as i64;
        let wrapped: Vec<usize> = match self.boundary {
            Boundary::Torus => coords.iter().map(|&c| c.rem_euclid(l) as usize).collect(),
            Boundary::Free => coords
                .iter()
                .map(|&c| {
                    if c < 0 || c >= l {
                        Err(Error::Index(format!("coordinate {c} outside 0..{l}")))
                    } else {
                        Ok(c as usize)
                    }
                })
                .collect::<Result<_>>()?,
        };
        self.index(&wrapped)
    }

    pub fn check_vertex(&self, v: usize) -> Result<()> {
        if v < self.num_vertices() {
            Ok(())
        } else {
            Err(Error::Index(format!("vertex {v} outside 0..{}", self.num_vertices())))
        }
    }

    /// The vertex playing the role of the origin: every coordinate `L / 2`.
    pub fn origin(&self) -> usize {
        let c = self.side / 2;
        (0..self.dim).map(|k| c * self.strides[k]).sum()
    }

    /// Neighbour of `v` in direction `dir`, or `None` across a free boundary.
    #[inline]
    pub fn neighbor(&self, v: usize, dir: Direction) -> Option<usize> {
        let k = axis_of(dir);
        let c = self.coord(v, k);
        let st = self.strides[k];
        if is_positive(dir) {
            if c + 1 < self.side {
                Some(v + st)
            } else if self.boundary == Boundary::Torus {
                Some(v + st - self.side * st)
            } else {
                None
            }
        } else if c > 0 {
            Some(v - st)
        } else if self.boundary == Boundary::Torus {
            Some(v + (self.side - 1) * st)
        } else {
            None
        }
    }

    /// Slot of the edge leaving `v` in direction `dir`, or `None` when absent.
    #[inline]
    pub fn slot(&self, v: usize, dir: Direction) -> Option<usize> {
        let k = axis_of(dir);
        if is_positive(dir) {
            if self.boundary == Boundary::Free && self.coord(v, k) + 1 == self.side {
                None
            } else {
                Some(v * self.dim + k)
            }
        } else {
            self.neighbor(v, dir).map(|w| w * self.dim + k)
        }
    }

    #[inline]
    pub fn slot_exists(&self, slot: usize) -> bool {
        match self.boundary {
            Boundary::Torus => slot < self.num_slots(),
            Boundary::Free => {
                slot < self.num_slots()
                    && self.coord(slot / self.dim, slot % self.dim) + 1 < self.side
            }
        }
    }

    /// Endpoints `(x, x + e_k)` of an existing edge slot.
    #[inline]
    pub fn endpoints(&self, slot: usize) -> (usize, usize) {
        let v = slot / self.dim;
        let k = slot % self.dim;
        let w = self
            .neighbor(v, (2 * k) as Direction)
            .expect("endpoints() called on a missing edge slot");
        (v, w)
    }

    /// Slot of the edge joining two lattice neighbours.
    pub fn slot_between(&self, x: usize, y: usize) -> Option<usize> {
        (0..2 * self.dim as u8).find_map(|dir| {
            (self.neighbor(x, dir) == Some(y)).then(|| self.slot(x, dir)).flatten()
        })
    }

    pub fn edge_slots(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_slots()).filter(move |&s| self.slot_exists(s))
    }

    /// Neighbours of `v` together with the slot of the joining edge.
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (Direction, usize, usize)> + '_ {
        (0..2 * self.dim as u8).filter_map(move |dir| {
            let w = self.neighbor(v, dir)?;
            let s = self.slot(v, dir)?;
            Some((dir, w, s))
        })
    }

    /// Displacement `y - x` per axis, using the minimal image on a torus.
    pub fn displacement(&self, x: usize, y: usize) -> Vec<i64> {
        let l = self.side as i64;
        (0..self.dim)
            .map(|k| {
                let mut dlt = self.coord(y, k) as i64 - self.coord(x, k) as i64;
                if self.boundary == Boundary::Torus {
                    if dlt > l / 2 {
                        dlt -= l;
                    } else if dlt < -(l / 2) {
                        dlt += l;
                    }
                }
                dlt
            })
            .collect()
    }

    pub fn l1_distance(&self, x: usize, y: usize) -> u64 {
        self.displacement(x, y).iter().map(|c| c.unsigned_abs()).sum()
    }

    pub fn linf_distance(&self, x: usize, y: usize) -> u64 {
        self.displacement(x, y).iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn euclidean_distance(&self, x: usize, y: usize) -> f64 {
        (self.displacement(x, y).iter().map(|&c| (c * c) as f64).sum::<f64>()).sqrt()
    }
}

/// An axis-aligned box `lo[k] <= x_k <= hi[k]` given in signed coordinates
/// relative to the lattice numbering (wrapped on a torus).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
}

impl BoxRegion {
    /// `[-n, n]^d` around the lattice origin.
    pub fn centered(spec: &LatticeSpec, n: usize) -> Result<Self> {
        if 2 * n + 1 > spec.side() {
            return Err(Error::Parameter(format!(
                "box [-{n},{n}]^d does not fit in side {}",
                spec.side()
            )));
        }
        let c = (spec.side() / 2) as i64;
        let n = n as i64;
        Ok(BoxRegion { lo: vec![c - n; spec.dim()], hi: vec![c + n; spec.dim()] })
    }

    pub fn whole(spec: &LatticeSpec) -> Self {
        BoxRegion { lo: vec![0; spec.dim()], hi: vec![spec.side() as i64 - 1; spec.dim()] }
    }

    pub fn volume(&self) -> usize {
        self.lo.iter().zip(&self.hi).map(|(a, b)| (b - a + 1).max(0) as usize).product()
    }

    /// Vertices of the box in lexicographic order of their offset.
    pub fn vertices(&self, spec: &LatticeSpec) -> Result<Vec<usize>> {
        let d = spec.dim();
        let mut out = Vec::with_capacity(self.volume());
        if self.volume() == 0 {
            return Ok(out);
        }
        let mut cur = self.lo.clone();
        loop {
            out.push(spec.index_signed(&cur)?);
            let mut k = 0;
            loop {
                if k == d {
                    return Ok(out);
                }
                cur[k] += 1;
                if cur[k] <= self.hi[k] {
                    break;
                }
                cur[k] = self.lo[k];
                k += 1;
            }
        }
    }

    /// Membership mask over all vertices of the lattice.
    pub fn mask(&self, spec: &LatticeSpec) -> Result<Vec<bool>> {
        let mut m = vec![false; spec.num_vertices()];
        for v in self.vertices(spec)? {
            m[v] = true;
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let t = LatticeSpec::torus(2, 5).unwrap();
        assert_eq!(t.num_vertices(), 25);
        assert_eq!(t.num_edges(), 50);
        assert_eq!(t.edge_slots().count(), 50);
        let f = LatticeSpec::free(3, 4).unwrap();
        assert_eq!(f.num_edges(), 3 * 16 * 3);
        assert_eq!(f.edge_slots().count(), f.num_edges());
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(LatticeSpec::torus(1, 5).is_err());
        assert!(LatticeSpec::torus(2, 1).is_err());
    }

    #[test]
    fn neighbors_are_symmetric() {
        for spec in [LatticeSpec::torus(2, 4).unwrap(), LatticeSpec::free(3, 3).unwrap()] {
            for v in 0..spec.num_vertices() {
                for (dir, w, s) in spec.neighbors(v) {
                    assert_eq!(spec.neighbor(w, opposite(dir)), Some(v));
                    assert_eq!(spec.slot(w, opposite(dir)), Some(s));
                    let (a, b) = spec.endpoints(s);
                    assert!((a, b) == (v, w) || (a, b) == (w, v));
                }
            }
        }
    }

    #[test]
    fn torus_displacement_uses_minimal_image() {
        let spec = LatticeSpec::torus(2, 10).unwrap();
        let x = spec.index(&[0, 0]).unwrap();
        let y = spec.index(&[9, 3]).unwrap();
        assert_eq!(spec.displacement(x, y), vec![-1, 3]);
        assert_eq!(spec.l1_distance(x, y), 4);
    }

    #[test]
    fn centered_box() {
        let spec = LatticeSpec::free(2, 9).unwrap();
        let b = BoxRegion::centered(&spec, 2).unwrap();
        assert_eq!(b.vertices(&spec).unwrap().len(), 25);
        assert!(BoxRegion::centered(&spec, 5).is_err());
    }
}
