//! Streaming walk runs that keep only the observables they need.

use rand::Rng;

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::walk::WalkCursor;

fn norm2(d: &[i64]) -> f64 {
    d.iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt()
}

/// Displacements of `X` at each of the increasing `horizons`.
pub fn plain_displacements<R: Rng + ?Sized>(env: &Environment, x0: usize, horizons: &[f64], rng: &mut R) -> Result<Vec<Vec<i64>>> {
    let mut c = WalkCursor::new(env, x0, rng)?;
    let mut out = Vec::with_capacity(horizons.len());
    for &t in horizons {
        c.advance_to(t, rng);
        out.push(c.displacement().to_vec());
    }
    Ok(out)
}

/// Displacements of the time-changed walk at each of the increasing
/// intrinsic times `targets`.
pub fn strong_displacements<R: Rng + ?Sized>(
    env: &Environment,
    in_cxi: &[bool],
    x0: usize,
    targets: &[f64],
    rng: &mut R,
) -> Result<Vec<Vec<i64>>> {
    let mut c = WalkCursor::new(env, x0, rng)?;
    let mut a = 0.0;
    let mut out = Vec::with_capacity(targets.len());
    let mut k = 0;
    while k < targets.len() {
        let v = c.vertex();
        let next = c.next_jump_time();
        if in_cxi[v] {
            let stay = next - c.time();
            while k < targets.len() && a + stay >= targets[k] {
                out.push(c.displacement().to_vec());
                k += 1;
            }
            if k == targets.len() {
                break;
            }
            a += stay;
        }
        if c.jump(rng).is_none() {
            return Err(Error::Consistency(format!("walk froze at {v} before reaching the strong cluster time")));
        }
    }
    Ok(out)
}

/// `A(T) / T`, the fraction of `[0, T]` spent on the strong cluster.
pub fn strong_time_fraction<R: Rng + ?Sized>(env: &Environment, in_cxi: &[bool], x0: usize, horizon: f64, rng: &mut R) -> Result<f64> {
    let mut c = WalkCursor::new(env, x0, rng)?;
    let mut a = 0.0;
    loop {
        let end = c.next_jump_time().min(horizon);
        if in_cxi[c.vertex()] {
            a += end - c.time();
        }
        if c.next_jump_time() > horizon || c.jump(rng).is_none() {
            break;
        }
    }
    Ok(a / horizon)
}

/// Intrinsic exit times of the time-changed walk from the closed Euclidean
/// balls of the given radii around the start, up to intrinsic time `s_max`.
pub fn strong_exit_times<R: Rng + ?Sized>(
    env: &Environment,
    in_cxi: &[bool],
    x0: usize,
    radii: &[f64],
    s_max: f64,
    rng: &mut R,
) -> Result<Vec<Option<f64>>> {
    let mut c = WalkCursor::new(env, x0, rng)?;
    let mut out = vec![None; radii.len()];
    let mut open = radii.len();
    let mut a = 0.0;
    while open > 0 {
        let v = c.vertex();
        if in_cxi[v] {
            a += c.next_jump_time() - c.time();
        }
        if a > s_max {
            break;
        }
        let Some(y) = c.jump(rng) else { break };
        if in_cxi[y] {
            let r = norm2(c.displacement());
            for (i, &rad) in radii.iter().enumerate() {
                if out[i].is_none() && r > rad {
                    out[i] = Some(a);
                    open -= 1;
                }
            }
        }
    }
    Ok(out)
}

/// `sup_{t <= T} |X(t)|` in Euclidean norm.
pub fn sup_displacement<R: Rng + ?Sized>(env: &Environment, x0: usize, horizon: f64, rng: &mut R) -> Result<f64> {
    let mut c = WalkCursor::new(env, x0, rng)?;
    let mut best: f64 = 0.0;
    while c.next_jump_time() <= horizon {
        if c.jump(rng).is_none() {
            break;
        }
        best = best.max(norm2(c.displacement()));
    }
    Ok(best)
}

/// `(X(t), X^xi(t))` displacements from one walk.
pub fn paired_positions<R: Rng + ?Sized>(
    env: &Environment,
    in_cxi: &[bool],
    x0: usize,
    t: f64,
    rng: &mut R,
) -> Result<(Vec<i64>, Vec<i64>)> {
    let mut c = WalkCursor::new(env, x0, rng)?;
    let mut a = 0.0;
    let mut plain = None;
    loop {
        let v = c.vertex();
        let next = c.next_jump_time();
        if plain.is_none() && next > t {
            plain = Some(c.displacement().to_vec());
        }
        if in_cxi[v] && a + (next - c.time()) >= t {
            let strong = c.displacement().to_vec();
            return Ok((plain.unwrap_or_else(|| strong.clone()), strong));
        }
        if in_cxi[v] {
            a += next - c.time();
        }
        if c.jump(rng).is_none() {
            return Err(Error::Consistency(format!("walk froze at {v}")));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSpec;
    use crate::law::ConductanceLaw;
    use crate::rng::stream;
    use crate::walk::{build_time_change, simulate_walk};
    use crate::geometry::label_clusters;

    #[test]
    fn streaming_matches_recorded_time_change() {
        let spec = LatticeSpec::torus(2, 16).unwrap();
        let env = crate::sample_environment(&spec, &ConductanceLaw::ZeroUniformMixture { q: 0.8 }, 5).unwrap();
        let hs = crate::geometry::decompose(&env, 0.3).unwrap();
        let x0 = (0..spec.num_vertices()).find(|&v| hs.in_cxi[v]).unwrap();
        for r in 0..20 {
            let tr = simulate_walk(&env, x0, 200.0, &mut stream(9, 0, r)).unwrap();
            let labels = label_clusters(&spec, &env.threshold_mask(0.3));
            let tc = build_time_change(&tr, &env, &labels).unwrap();
            let s = 0.5 * tc.total();
            let d = strong_displacements(&env, &hs.in_cxi, x0, &[s], &mut stream(9, 0, r)).unwrap();
            let t = tc.inverse(s).unwrap();
            assert_eq!(d[0], tr.displacement_at(&spec, t));
            let f = strong_time_fraction(&env, &hs.in_cxi, x0, 200.0, &mut stream(9, 0, r)).unwrap();
            assert!((f - tc.a(200.0) / 200.0).abs() < 1e-12);
        }
    }

    #[test]
    fn plain_runs_match_recorded_walks() {
        let spec = LatticeSpec::torus(2, 16).unwrap();
        let env = Environment::constant(&spec, 1.0).unwrap();
        let tr = simulate_walk(&env, 3, 40.0, &mut stream(2, 0, 0)).unwrap();
        let d = plain_displacements(&env, 3, &[10.0, 40.0], &mut stream(2, 0, 0)).unwrap();
        assert_eq!(d[0], tr.displacement_at(&spec, 10.0));
        assert_eq!(d[1], tr.displacement_at(&spec, 40.0));
        let sup = sup_displacement(&env, 3, 40.0, &mut stream(2, 0, 0)).unwrap();
        assert!(sup >= norm2(&d[1]));
    }
}
