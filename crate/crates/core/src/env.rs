//! Random-conductance environments on finite boxes and tori.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::RngCore;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, opposite};
use crate::law::ConductanceLaw;
use crate::rng;

pub const MAGIC: &[u8; 4] = b"RCME";
pub const FORMAT_VERSION: u16 = 1;

const CHUNK: usize = 1 << 12;

/// One conductance per undirected edge, stored in `(vertex, positive direction)` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    spec: LatticeSpec,
    values: Vec<f64>,
    law_tag: String,
    seed: u64,
}

/// Boolean per edge slot; slots of missing free-boundary edges are always closed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeMask {
    open: Vec<bool>,
}

impl EdgeMask {
    pub fn from_slots(open: Vec<bool>) -> Self {
        EdgeMask { open }
    }

    pub fn all(spec: &LatticeSpec, value: bool) -> Self {
        let mut open = vec![false; spec.num_slots()];
        if value {
            for s in spec.edge_slots() {
                open[s] = true;
            }
        }
        EdgeMask { open }
    }

    #[inline]
    pub fn is_open(&self, slot: usize) -> bool {
        self.open[slot]
    }

    pub fn set(&mut self, slot: usize, value: bool) {
        self.open[slot] = value;
    }

    pub fn len(&self) -> usize {
        self.open.len()
    }

    pub fn is_empty(&self) -> bool {
        self.open.is_empty()
    }

    pub fn count_open(&self) -> usize {
        self.open.iter().filter(|&&b| b).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.open
    }

    /// Whether every open edge of `self` is open in `other`.
    pub fn is_subset_of(&self, other: &EdgeMask) -> bool {
        self.open.len() == other.open.len()
            && self.open.iter().zip(&other.open).all(|(&a, &b)| !a || b)
    }
}

/// Draws an environment with one independent value per edge. The value of an
/// edge depends only on `(seed, slot)`, never on iteration order.
pub fn sample_environment(spec: &LatticeSpec, law: &ConductanceLaw, seed: u64) -> Result<Environment> {
    law.validate()?;
    let n = spec.num_slots();
    let mut values = vec![0.0; n];
    values
        .par_chunks_mut(CHUNK)
        .enumerate()
        .for_each(|(c, chunk)| {
            let mut rng = rng::stream(seed, rng::domain::ENVIRONMENT, 0);
            let first = c * CHUNK;
            // two u64 words = four 32-bit counter positions per slot
            rng.set_word_pos(4 * first as u128);
            for (i, v) in chunk.iter_mut().enumerate() {
                let w1 = rng.next_u64();
                let w2 = rng.next_u64();
                if spec.slot_exists(first + i) {
                    *v = law.draw(w1, w2);
                }
            }
        });
    Ok(Environment { spec: spec.clone(), values, law_tag: law.to_string(), seed })
}

impl Environment {
    pub fn from_values(spec: LatticeSpec, values: Vec<f64>, law_tag: impl Into<String>, seed: u64) -> Result<Self> {
        if values.len() != spec.num_slots() {
            return Err(Error::Parameter(format!(
                "expected {} edge slots, got {}",
                spec.num_slots(),
                values.len()
            )));
        }
        let mut values = values;
        for (s, v) in values.iter_mut().enumerate() {
            if !(0.0..=1.0).contains(v) {
                return Err(Error::Parameter(format!("conductance {v} at slot {s} outside [0,1]")));
            }
            if !spec.slot_exists(s) {
                *v = 0.0;
            }
        }
        Ok(Environment { spec, values, law_tag: law_tag.into(), seed })
    }

    /// Environment with the same value on every edge.
    pub fn constant(spec: &LatticeSpec, value: f64) -> Result<Self> {
        sample_environment(spec, &ConductanceLaw::Constant { value }, 0)
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn law_tag(&self) -> &str {
        &self.law_tag
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Raw slot array in `(vertex-major, direction-minor)` order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn slot_value(&self, slot: usize) -> f64 {
        self.values[slot]
    }

    /// Conductance of the edge leaving `x` in direction `dir` (0 when absent).
    #[inline]
    pub fn conductance_dir(&self, x: usize, dir: u8) -> f64 {
        self.spec.slot(x, dir).map_or(0.0, |s| self.values[s])
    }

    /// Conductance between lattice neighbours `x` and `y`.
    pub fn conductance(&self, x: usize, y: usize) -> Result<f64> {
        self.spec.check_vertex(x)?;
        self.spec.check_vertex(y)?;
        self.spec
            .slot_between(x, y)
            .map(|s| self.values[s])
            .ok_or_else(|| Error::Index(format!("{x} and {y} are not lattice neighbours")))
    }

    pub fn set_conductance(&mut self, x: usize, y: usize, value: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Parameter(format!("conductance {value} outside [0,1]")));
        }
        let s = self
            .spec
            .slot_between(x, y)
            .ok_or_else(|| Error::Index(format!("{x} and {y} are not lattice neighbours")))?;
        self.values[s] = value;
        Ok(())
    }

    /// `n(x)`: the sum of conductances of the edges at `x`.
    pub fn weight_at(&self, x: usize) -> Result<f64> {
        self.spec.check_vertex(x)?;
        Ok(self.weight_unchecked(x))
    }

    #[inline]
    pub fn weight_unchecked(&self, x: usize) -> f64 {
        let mut s = 0.0;
        for dir in 0..2 * self.spec.dim() as u8 {
            s += self.conductance_dir(x, dir);
        }
        s
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.spec.num_vertices())
            .into_par_iter()
            .map(|x| self.weight_unchecked(x))
            .collect()
    }

    /// Edges with `w >= xi`, or `w > 0` when `xi == 0`.
    pub fn threshold_mask(&self, xi: f64) -> EdgeMask {
        let open = self
            .values
            .iter()
            .enumerate()
            .map(|(s, &v)| {
                self.spec.slot_exists(s) && if xi > 0.0 { v >= xi } else { v > 0.0 }
            })
            .collect();
        EdgeMask { open }
    }

    /// Applies `f` to every existing edge value.
    pub fn map_values(&self, tag: impl Into<String>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = self.values.iter().map(|&v| f(v)).collect();
        Environment::from_values(self.spec.clone(), values, tag, self.seed)
    }

    /// Conductance seen from `y` towards `x`; equals the one seen from `x`.
    pub fn conductance_from(&self, y: usize, dir_from_x: u8) -> f64 {
        self.spec
            .neighbor(y, opposite(dir_from_x))
            .map_or(0.0, |x| self.conductance_dir(x, dir_from_x))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let dim = u16::try_from(self.spec.dim()).map_err(|_| Error::Format("dimension too large".into()))?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&dim.to_le_bytes())?;
        w.write_all(&(self.spec.side() as u64).to_le_bytes())?;
        w.write_all(&[self.spec.boundary().code()])?;
        w.write_all(&self.seed.to_le_bytes())?;
        let tag = self.law_tag.as_bytes();
        w.write_all(&(tag.len() as u32).to_le_bytes())?;
        w.write_all(tag)?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let mut b2 = [0u8; 2];
        let mut b8 = [0u8; 8];
        let mut b4 = [0u8; 4];
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b2)?;
        let version = u16::from_le_bytes(b2);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        r.read_exact(&mut b2)?;
        let dim = u16::from_le_bytes(b2) as usize;
        r.read_exact(&mut b8)?;
        let side = usize::try_from(u64::from_le_bytes(b8)).map_err(|_| Error::Format("side too large".into()))?;
        r.read_exact(&mut b1)?;
        let boundary = crate::lattice::Boundary::from_code(b1[0])?;
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        r.read_exact(&mut b4)?;
        let tag_len = u32::from_le_bytes(b4) as usize;
        let mut tag = vec![0u8; tag_len];
        r.read_exact(&mut tag)?;
        let law_tag = String::from_utf8(tag).map_err(|_| Error::Format("law tag is not UTF-8".into()))?;
        let spec = LatticeSpec::new(dim, side, boundary)?;
        let mut raw = vec![0u8; spec.num_slots() * 8];
        r.read_exact(&mut raw)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Environment::from_values(spec, values, law_tag, seed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_law_fills_every_edge() {
        let spec = LatticeSpec::torus(2, 4).unwrap();
        let env = sample_environment(&spec, &ConductanceLaw::Constant { value: 1.0 }, 7).unwrap();
        assert!(spec.edge_slots().all(|s| env.slot_value(s) == 1.0));
    }

    #[test]
    fn sampling_is_bit_reproducible() {
        let spec = LatticeSpec::free(3, 9).unwrap();
        let law = ConductanceLaw::ZeroUniformMixture { q: 0.6 };
        let a = sample_environment(&spec, &law, 11).unwrap();
        let b = sample_environment(&spec, &law, 11).unwrap();
        let c = sample_environment(&spec, &law, 12).unwrap();
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn edge_value_depends_only_on_slot() {
        // the same slot drawn on a bigger torus gives the same value
        let law = ConductanceLaw::PolynomialTail { gamma: 0.5 };
        let small = sample_environment(&LatticeSpec::torus(2, 64).unwrap(), &law, 3).unwrap();
        let big = sample_environment(&LatticeSpec::torus(2, 128).unwrap(), &law, 3).unwrap();
        assert_eq!(&small.values()[..5000], &big.values()[..5000]);
    }

    #[test]
    fn invalid_law_is_a_parameter_error() {
        let spec = LatticeSpec::torus(2, 4).unwrap();
        let err = sample_environment(&spec, &ConductanceLaw::Bernoulli { q: 1.2 }, 0).unwrap_err();
        assert!(matches!(err, Error::Parameter(_)));
    }

    #[test]
    fn threshold_mask_examples() {
        let spec = LatticeSpec::torus(2, 3).unwrap();
        let env = Environment::constant(&spec, 1.0).unwrap();
        assert_eq!(env.threshold_mask(0.5).count_open(), spec.num_edges());

        let vals: Vec<f64> = (0..spec.num_slots()).map(|s| [0.0, 0.3, 0.8][s % 3]).collect();
        let env = Environment::from_values(spec.clone(), vals, "hand", 0).unwrap();
        let m = env.threshold_mask(0.5);
        for s in spec.edge_slots() {
            assert_eq!(m.is_open(s), env.slot_value(s) == 0.8);
        }
        let m0 = env.threshold_mask(0.0);
        for s in spec.edge_slots() {
            assert_eq!(m0.is_open(s), env.slot_value(s) > 0.0);
        }
    }

    #[test]
    fn weight_examples() {
        let spec = LatticeSpec::torus(3, 4).unwrap();
        let env = Environment::constant(&spec, 1.0).unwrap();
        assert_eq!(env.weight_at(5).unwrap(), 6.0);
        assert!(env.weight_at(spec.num_vertices()).is_err());

        let spec = LatticeSpec::torus(2, 5).unwrap();
        let mut env = Environment::constant(&spec, 1.0).unwrap();
        let x = spec.index(&[2, 2]).unwrap();
        let nbrs: Vec<usize> = spec.neighbors(x).map(|(_, w, _)| w).collect();
        for y in nbrs {
            env.set_conductance(x, y, 0.0).unwrap();
        }
        assert_eq!(env.weight_at(x).unwrap(), 0.0);
    }

    #[test]
    fn weight_matches_resummation_over_incident_edges() {
        let spec = LatticeSpec::free(2, 12).unwrap();
        let env = sample_environment(&spec, &ConductanceLaw::ZeroUniformMixture { q: 0.7 }, 5).unwrap();
        for x in 0..spec.num_vertices() {
            let c = spec.coords(x);
            let mut s = 0.0;
            for k in 0..2 {
                let mut up = c.clone();
                if c[k] + 1 < 12 {
                    up[k] += 1;
                    s += env.conductance(x, spec.index(&up).unwrap()).unwrap();
                }
                let mut dn = c.clone();
                if c[k] > 0 {
                    dn[k] -= 1;
                    s += env.conductance(x, spec.index(&dn).unwrap()).unwrap();
                }
            }
            assert!((env.weight_at(x).unwrap() - s).abs() < 1e-12);
        }
    }

    #[test]
    fn file_format_layout() {
        let spec = LatticeSpec::torus(2, 2).unwrap();
        let env = Environment::constant(&spec, 0.5).unwrap();
        let mut buf = Vec::new();
        env.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"RCME");
        assert_eq!(u16::from_le_bytes([buf[4], buf[5]]), 1);
        assert_eq!(u16::from_le_bytes([buf[6], buf[7]]), 2);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 2);
        assert_eq!(buf[16], 1);
        let tag_len = u32::from_le_bytes(buf[25..29].try_into().unwrap()) as usize;
        assert_eq!(&buf[29..29 + tag_len], b"constant:0.5");
        assert_eq!(buf.len(), 29 + tag_len + 8 * 8);
        assert!(Environment::read_from(&b"XXXX"[..]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn serialization_round_trip_is_bit_exact(seed in any::<u64>(), side in 2usize..7, torus in any::<bool>(), gamma in 0.05f64..3.0) {
            let spec = LatticeSpec::new(2, side, if torus { crate::lattice::Boundary::Torus } else { crate::lattice::Boundary::Free }).unwrap();
            let env = sample_environment(&spec, &ConductanceLaw::PolynomialTail { gamma }, seed).unwrap();
            let mut buf = Vec::new();
            env.write_to(&mut buf).unwrap();
            let back = Environment::read_from(&buf[..]).unwrap();
            prop_assert_eq!(back.spec(), env.spec());
            prop_assert_eq!(back.seed(), seed);
            prop_assert_eq!(back.law_tag(), env.law_tag());
            let a: Vec<u64> = env.values().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.values().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn conductance_is_symmetric(seed in any::<u64>()) {
            let spec = LatticeSpec::torus(3, 4).unwrap();
            let env = sample_environment(&spec, &ConductanceLaw::ZeroUniformMixture { q: 0.5 }, seed).unwrap();
            for x in 0..spec.num_vertices() {
                for (_, y, _) in spec.neighbors(x) {
                    prop_assert_eq!(env.conductance(x, y).unwrap(), env.conductance(y, x).unwrap());
                }
            }
        }
    }
}
