//! Exact transition probabilities of constant-speed walks by uniformization.

use std::collections::BTreeMap;

use super::weights::EffectiveWeights;
use crate::env::Environment;
use crate::error::{Error, Result};

/// Poisson tail mass left out of the truncated series.
pub const POISSON_TAIL: f64 = 1e-12;

/// Discrete-time jump matrix of a walk on a finite set of lattice vertices.
/// Suppressed jumps become self-loops.
#[derive(Debug, Clone)]
pub struct JumpChain {
    states: Vec<usize>,
    index: BTreeMap<usize, usize>,
    rows: Vec<Vec<(u32, f64)>>,
}

impl JumpChain {
    /// The walk of `env` on the vertices in `region` (all vertices if `None`),
    /// with jumps leaving the region suppressed.
    pub fn from_env(env: &Environment, region: Option<&[bool]>) -> Result<Self> {
        let spec = env.spec();
        let inside = |v: usize| region.is_none_or(|r| r[v]);
        let states: Vec<usize> = (0..spec.num_vertices()).filter(|&v| inside(v)).collect();
        let index: BTreeMap<usize, usize> = states.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let rows = states
            .iter()
            .map(|&x| {
                let n = env.weight_unchecked(x);
                let mut row: BTreeMap<u32, f64> = BTreeMap::new();
                let mut stay = 1.0;
                if n > 0.0 {
                    for (dir, y, _) in spec.neighbors(x) {
                        let c = env.conductance_dir(x, dir);
                        if c > 0.0 && inside(y) {
                            *row.entry(index[&y] as u32).or_insert(0.0) += c / n;
                            stay -= c / n;
                        }
                    }
                }
                if stay > 1e-15 {
                    *row.entry(index[&x] as u32).or_insert(0.0) += stay;
                }
                row.into_iter().collect()
            })
            .collect();
        Ok(JumpChain { states, index, rows })
    }

    /// The time-changed walk on the strong cluster: from `x` it jumps to `y`
    /// with probability `w(x,y) / n(x)` and stays otherwise. Restricted to
    /// `members` if given.
    pub fn from_effective(weights: &EffectiveWeights, members: Option<&[bool]>) -> Result<Self> {
        let inside = |v: usize| weights.contains(v) && members.is_none_or(|m| m[v]);
        let states: Vec<usize> = weights.vertices().iter().copied().filter(|&v| inside(v)).collect();
        let index: BTreeMap<usize, usize> = states.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut rows = Vec::with_capacity(states.len());
        for &x in &states {
            let n = weights.node_weight(x);
            let mut row = Vec::new();
            let mut stay = 1.0;
            for &(y, w) in weights.neighbors(x) {
                if inside(y) {
                    row.push((index[&y] as u32, w / n));
                    stay -= w / n;
                }
            }
            if stay < -1e-9 {
                return Err(Error::Consistency(format!(
                    "effective weights at {x} exceed the vertex weight by {}",
                    -stay
                )));
            }
            if stay > 1e-15 {
                row.push((index[&x] as u32, stay));
            }
            rows.push(row);
        }
        Ok(JumpChain { states, index, rows })
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    /// Lattice vertex of each state.
    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn state_of(&self, v: usize) -> Option<usize> {
        self.index.get(&v).copied()
    }

    fn step(&self, p: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (i, row) in self.rows.iter().enumerate() {
            let pi = p[i];
            if pi != 0.0 {
                for &(j, q) in row {
                    out[j as usize] += pi * q;
                }
            }
        }
    }
}

/// `P_x(X(t) = .)` indexed by chain state, for each `t` in `times`.
pub fn heat_kernel_multi(chain: &JumpChain, x: usize, times: &[f64]) -> Result<Vec<Vec<f64>>> {
    if let Some(&t) = times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
        return Err(Error::Domain(format!("time must be finite and nonnegative, got {t}")));
    }
    let s = chain
        .state_of(x)
        .ok_or_else(|| Error::Domain(format!("vertex {x} is not a state of the chain")))?;
    let m = chain.num_states();
    let mut out = vec![vec![0.0; m]; times.len()];
    let mut p = vec![0.0; m];
    p[s] = 1.0;
    let mut next = vec![0.0; m];
    let mut log_w: Vec<f64> = times.iter().map(|&t| -t).collect();
    let mut acc = vec![0.0; times.len()];
    let mut k = 0u64;
    loop {
        let mut all_done = true;
        for (i, &t) in times.iter().enumerate() {
            if acc[i] >= 1.0 - POISSON_TAIL {
                continue;
            }
            all_done = false;
            let w = if t == 0.0 {
                if k == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                log_w[i].exp()
            };
            acc[i] += w;
            if w > 0.0 {
                out[i].iter_mut().zip(&p).for_each(|(o, q)| *o += w * q);
            }
            if t > 0.0 {
                log_w[i] += t.ln() - ((k + 1) as f64).ln();
            }
        }
        if all_done {
            break;
        }
        chain.step(&p, &mut next);
        std::mem::swap(&mut p, &mut next);
        k += 1;
    }
    Ok(out)
}

/// `P_x(X(t) = .)` indexed by chain state.
pub fn heat_kernel_exact(chain: &JumpChain, x: usize, t: f64) -> Result<Vec<f64>> {
    Ok(heat_kernel_multi(chain, x, &[t])?.remove(0))
}
