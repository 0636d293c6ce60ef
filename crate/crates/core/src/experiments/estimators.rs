//! Estimators of the diffusivity, the strong-cluster time fraction and the
//! other quantities the experiments report.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::config::EnvRecipe;
use super::ensemble::{replicate, Ensemble, Prepared};
use super::runs;
use crate::effective::{
    effective_conductances_with, heat_kernel_multi, poincare_constant, JumpChain, WalkOperator,
};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::geometry::{find_holes, ChemicalMetric, UNREACHABLE};
use crate::lattice::BoxRegion;
use crate::rng::{domain, mix, stream};
use crate::stats::{binomial_ci, ks_test, mean_se, normal_cdf, ols, BinomialCi, KsResult, MeanSe, Ols};

/// Fewest samples the Gaussianity test accepts.
pub const MIN_KS_SAMPLES: usize = 1000;

mod tag {
    pub const SIGMA2: u64 = 1;
    pub const FRACTION: u64 = 3;
    pub const GAUSS: u64 = 4;
    pub const EXIT: u64 = 5;
    pub const CHEM: u64 = 6;
    pub const SUP: u64 = 7;
    pub const PAIRED: u64 = 8;
}

/// Per-coordinate mean square displacement divided by `t`.
fn scaled_square(d: &[i64], t: f64) -> f64 {
    d.iter().map(|&x| (x * x) as f64).sum::<f64>() / (d.len() as f64 * t)
}

#[derive(Debug, Clone, Serialize)]
pub struct Sigma2Estimate {
    pub times: Vec<f64>,
    /// `mean_i X_i(t)^2 / t` at each time.
    pub per_time: Vec<MeanSe>,
    /// `X_i(t)^2 / t` per coordinate at the last time.
    pub per_coordinate: Vec<MeanSe>,
    /// Slope of `mean_i E X_i(t)^2` against `t`, with three or more times.
    pub slope: Option<Ols>,
    pub rejected: usize,
    pub origin_substituted: bool,
}

impl Sigma2Estimate {
    /// The estimate at the last time.
    pub fn last(&self) -> MeanSe {
        *self.per_time.last().expect("at least one time")
    }

    fn from_displacements(times: &[f64], disp: Vec<Vec<Vec<i64>>>, ens: &Ensemble, xi: Option<f64>) -> Result<Self> {
        let per_time = (0..times.len())
            .map(|k| mean_se(&disp.iter().map(|d| scaled_square(&d[k], times[k])).collect::<Vec<_>>()))
            .collect::<Result<Vec<_>>>()?;
        let last = times.len() - 1;
        let dim = ens.recipe.dim;
        let per_coordinate = (0..dim)
            .map(|i| {
                let xs: Vec<f64> = disp.iter().map(|d| (d[last][i] * d[last][i]) as f64 / times[last]).collect();
                mean_se(&xs)
            })
            .collect::<Result<Vec<_>>>()?;
        let slope = if times.len() >= 3 {
            let msd: Vec<f64> = per_time.iter().zip(times).map(|(m, t)| m.mean * t).collect();
            Some(ols(times, &msd)?)
        } else {
            None
        };
        Ok(Sigma2Estimate {
            times: times.to_vec(),
            per_time,
            per_coordinate,
            slope,
            rejected: ens.rejected(),
            origin_substituted: ens.origin_substituted(xi)?,
        })
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Parameter("need at least one time".into()));
    }
    if times.iter().any(|t| !(*t > 0.0 && t.is_finite())) || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parameter("times must be positive and increasing".into()));
    }
    Ok(())
}

/// Diffusivity of `X` from `X_i(t)^2 / t` over replicas.
pub fn estimate_sigma2(ens: &Ensemble, times: &[f64], replicas: usize) -> Result<Sigma2Estimate> {
    check_times(times)?;
    let disp = ens.run(tag::SIGMA2, None, false, replicas, |ctx, rng| {
        runs::plain_displacements(&ctx.prepared.env, ctx.start, times, rng)
    })?;
    Sigma2Estimate::from_displacements(times, disp, ens, None)
}

/// Diffusivity of the time-changed walk, in its own intrinsic time. Uses
/// the same random streams as [`estimate_sigma2`].
pub fn estimate_sigma2_time_changed(ens: &Ensemble, xi: f64, times: &[f64], replicas: usize) -> Result<Sigma2Estimate> {
    check_times(times)?;
    let disp = ens.run(tag::SIGMA2, Some(xi), true, replicas, |ctx, rng| {
        let hs = ctx.holes.expect("strong structure requested");
        runs::strong_displacements(&ctx.prepared.env, &hs.in_cxi, ctx.start, times, rng)
    })?;
    Sigma2Estimate::from_displacements(times, disp, ens, Some(xi))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CXiEstimate {
    pub xi: f64,
    /// `A(T) / T` over walks.
    pub temporal: MeanSe,
    /// `n`-weighted fraction of the giant cluster lying in `C^xi`; `n = 1`
    /// and zero SE in quenched mode.
    pub spatial: MeanSe,
    pub horizon: f64,
}

impl CXiEstimate {
    pub fn combined_se(&self) -> f64 {
        self.temporal.se.hypot(self.spatial.se)
    }

    /// Whether the two estimators agree within `k` combined SE.
    pub fn agree(&self, k: f64) -> bool {
        (self.temporal.mean - self.spatial.mean).abs() <= k * self.combined_se()
    }
}

/// `sum n 1{C^xi} / sum n` over the giant cluster of one environment.
pub fn spatial_c_xi(prepared: &Prepared, xi: f64) -> Result<f64> {
    let hs = prepared.strong(xi)?;
    Ok(prepared.spatial_fraction(&hs.in_cxi))
}

pub fn estimate_c_xi(ens: &Ensemble, xi: f64, horizon: f64, replicas: usize) -> Result<CXiEstimate> {
    check_times(&[horizon])?;
    let rows = ens.run(tag::FRACTION, Some(xi), false, replicas, |ctx, rng| {
        let hs = ctx.holes.expect("strong structure requested");
        let f = runs::strong_time_fraction(&ctx.prepared.env, &hs.in_cxi, ctx.start, horizon, rng)?;
        let spatial = if ens.quenched_env().is_none() { ctx.prepared.spatial_fraction(&hs.in_cxi) } else { 0.0 };
        Ok((f, spatial))
    })?;
    let temporal = mean_se(&rows.iter().map(|r| r.0).collect::<Vec<_>>())?;
    let spatial = match ens.quenched_env() {
        Some(p) => MeanSe { mean: spatial_c_xi(p, xi)?, se: 0.0, n: 1 },
        None => mean_se(&rows.iter().map(|r| r.1).collect::<Vec<_>>())?,
    };
    Ok(CXiEstimate { xi, temporal, spatial, horizon })
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceIdentityReport {
    pub xi: f64,
    /// Spatial estimate of `c(xi)`.
    pub c_xi: MeanSe,
    pub horizon: f64,
    /// Intrinsic time `c(xi) T` at which the time-changed walk is observed.
    pub intrinsic_time: f64,
    pub sigma2: MeanSe,
    pub sigma2_xi: MeanSe,
    /// `c(xi) sigma^2(xi)`.
    pub product: f64,
    pub difference: f64,
    pub pooled_se: f64,
    pub pass: bool,
}

/// Compares `c(xi) sigma^2(xi)` with `sigma^2`. Both walks are observed after
/// the same amount of time on the strong cluster, `X` at `T` and `X^xi` at
/// `c(xi) T`. The two share random streams, so the pooled SE, which treats
/// them as independent, is conservative.
pub fn verify_variance_identity(ens: &Ensemble, xi: f64, horizon: f64, replicas: usize) -> Result<VarianceIdentityReport> {
    check_times(&[horizon])?;
    let c_xi = match ens.quenched_env() {
        Some(p) => MeanSe { mean: spatial_c_xi(p, xi)?, se: 0.0, n: 1 },
        None => mean_se(
            &replicate(replicas, |i| spatial_c_xi(&*ens.environment(i)?, xi))?,
        )?,
    };
    let s = c_xi.mean * horizon;
    let sigma2 = estimate_sigma2(ens, &[horizon], replicas)?.last();
    let sigma2_xi = estimate_sigma2_time_changed(ens, xi, &[s], replicas)?.last();
    let product = c_xi.mean * sigma2_xi.mean;
    let pooled_se = sigma2.se.hypot(c_xi.mean * sigma2_xi.se);
    let difference = product - sigma2.mean;
    Ok(VarianceIdentityReport {
        xi,
        c_xi,
        horizon,
        intrinsic_time: s,
        sigma2,
        sigma2_xi,
        product,
        difference,
        pooled_se,
        pass: difference.abs() <= 3.0 * pooled_se,
    })
}

/// Two-sided KS test of `samples` against the standard normal law.
pub fn gaussianity_test(samples: &[f64]) -> Result<KsResult> {
    if samples.len() < MIN_KS_SAMPLES {
        return Err(Error::SampleSize { needed: MIN_KS_SAMPLES, got: samples.len() });
    }
    ks_test(samples, normal_cdf)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GaussianityReport {
    pub ks: KsResult,
    pub horizon: f64,
    /// `sqrt(mean X~^2 / t)`, the scale the samples were divided by.
    pub sigma: f64,
    pub jitter: bool,
    pub origin_substituted: bool,
}

/// KS test of the first coordinate of `X(t)` over walks. With `jitter` each
/// integer coordinate gets an independent uniform offset on `(-1/2, 1/2)`,
/// which removes the lattice steps from the empirical CDF.
pub fn quenched_gaussianity(ens: &Ensemble, horizon: f64, replicas: usize, jitter: bool) -> Result<GaussianityReport> {
    check_times(&[horizon])?;
    let xs = ens.run(tag::GAUSS, None, false, replicas, |ctx, rng| {
        let d = runs::plain_displacements(&ctx.prepared.env, ctx.start, &[horizon], rng)?;
        let mut x = d[0][0] as f64;
        if jitter {
            x += ens.aux_rng(tag::GAUSS, ctx.index).random::<f64>() - 0.5;
        }
        Ok(x)
    })?;
    let ms = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
    if ms <= 0.0 {
        return Err(Error::Degenerate("every walk ended at its start".into()));
    }
    let scale = ms.sqrt();
    let z: Vec<f64> = xs.iter().map(|x| x / scale).collect();
    Ok(GaussianityReport {
        ks: gaussianity_test(&z)?,
        horizon,
        sigma: (ms / horizon).sqrt(),
        jitter,
        origin_substituted: ens.origin_substituted(None)?,
    })
}

/// Runs the KS test on `runs` batches of exact normal samples and counts
/// rejections at `level`.
pub fn ks_calibration(runs: usize, samples: usize, level: f64, seed: u64, ci_level: f64) -> Result<BinomialCi> {
    let rejected = replicate(runs, |i| {
        let mut rng = stream(seed, domain::AUX, i as u64);
        let xs: Vec<f64> = (0..samples).map(|_| rng.sample(StandardNormal)).collect();
        Ok(gaussianity_test(&xs)?.p_value < level)
    })?;
    binomial_ci(rejected.iter().filter(|&&r| r).count() as u64, runs as u64, ci_level)
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelDecayReport {
    pub times: Vec<f64>,
    /// `P_x[X(t) = x]`.
    pub return_probability: Vec<f64>,
    /// `t^{d/2} P_x[X(t) = x]`.
    pub scaled: Vec<f64>,
    pub burn_in: f64,
    /// Log-log fit over the times at or after the burn-in.
    pub fit: Ols,
    pub max_scaled: f64,
    /// Largest relative increase of the scaled value between consecutive
    /// times after the burn-in; zero when it is non-increasing.
    pub max_rise: f64,
    /// Largest scaled value after the burn-in over the value at the first
    /// time after the burn-in.
    pub envelope: f64,
    pub start: usize,
}

/// Return probabilities of `chain` from `x` and their decay rate.
pub fn kernel_decay(chain: &JumpChain, x: usize, dim: usize, times: &[f64], burn_in: f64) -> Result<KernelDecayReport> {
    check_times(times)?;
    let s = chain.state_of(x).ok_or_else(|| Error::Domain(format!("vertex {x} is not a state of the chain")))?;
    let p: Vec<f64> = heat_kernel_multi(chain, x, times)?.iter().map(|row| row[s]).collect();
    let half = dim as f64 / 2.0;
    let scaled: Vec<f64> = p.iter().zip(times).map(|(q, t)| q * t.powf(half)).collect();
    let kept: Vec<usize> = (0..times.len()).filter(|&k| times[k] >= burn_in).collect();
    let lx: Vec<f64> = kept.iter().map(|&k| times[k].ln()).collect();
    let ly: Vec<f64> = kept.iter().map(|&k| p[k].ln()).collect();
    let fit = ols(&lx, &ly)?;
    let max_rise = kept
        .windows(2)
        .map(|w| (scaled[w[1]] - scaled[w[0]]) / scaled[w[0]])
        .fold(0.0, f64::max);
    let envelope = kept.iter().map(|&k| scaled[k]).fold(0.0, f64::max) / scaled[kept[0]];
    Ok(KernelDecayReport {
        envelope,
        times: times.to_vec(),
        return_probability: p,
        scaled: scaled.clone(),
        burn_in,
        fit,
        max_scaled: scaled.iter().copied().fold(0.0, f64::max),
        max_rise,
        start: x,
    })
}

/// Kernel decay of `X` on the giant cluster, or of `X^xi` on the strong
/// cluster, started at the member nearest the origin.
pub fn kernel_decay_experiment(prepared: &Prepared, xi: Option<f64>, times: &[f64], burn_in: f64) -> Result<KernelDecayReport> {
    let env = &prepared.env;
    let spec = env.spec();
    let (chain, members) = match xi {
        None => (JumpChain::from_env(env, Some(&prepared.in_giant))?, prepared.in_giant.clone()),
        Some(xi) => {
            let hs = prepared.strong(xi)?;
            let w = effective_conductances_with(env, &hs, &BoxRegion::whole(spec))?;
            (JumpChain::from_effective(&w, Some(&hs.in_cxi))?, hs.in_cxi.clone())
        }
    };
    let sampler = super::ensemble::StartSampler::new(env, &members, super::config::StartPolicy::Origin)?;
    kernel_decay(&chain, sampler.nearest_to_origin(), spec.dim(), times, burn_in)
}

#[derive(Debug, Clone, Serialize)]
pub struct ExitTailReport {
    pub xi: f64,
    pub radii: Vec<f64>,
    pub times: Vec<f64>,
    /// `P[tau(x, r) < t]` indexed `[radius][time]`.
    pub probability: Vec<Vec<BinomialCi>>,
    /// Smallest `c` with `P <= c sqrt(t) / r` on the whole grid.
    pub c_e: f64,
    /// Smallest `c'` with `P <= c' (sqrt(t) / r)^3` on the whole grid.
    pub c_e_cube: f64,
    pub batch_c_e: Vec<f64>,
    /// `(max - min) / min` of the per-batch constants.
    pub batch_spread: f64,
    pub replicas: usize,
}

impl ExitTailReport {
    pub fn cube_bound_holds(&self) -> bool {
        self.c_e_cube <= 27.0 * self.c_e.powi(3)
    }
}

fn fitted_constants(radii: &[f64], times: &[f64], exits: &[Vec<Option<f64>>]) -> (Vec<Vec<u64>>, f64, f64) {
    let mut counts = vec![vec![0u64; times.len()]; radii.len()];
    for e in exits {
        for (i, tau) in e.iter().enumerate() {
            if let Some(tau) = tau {
                for (k, &t) in times.iter().enumerate() {
                    if *tau < t {
                        counts[i][k] += 1;
                    }
                }
            }
        }
    }
    let n = exits.len() as f64;
    let (mut c1, mut c3) = (0.0f64, 0.0f64);
    for (i, &r) in radii.iter().enumerate() {
        for (k, &t) in times.iter().enumerate() {
            let p = counts[i][k] as f64 / n;
            let u = t.sqrt() / r;
            c1 = c1.max(p / u);
            c3 = c3.max(p / u.powi(3));
        }
    }
    (counts, c1, c3)
}

/// Exit probabilities of the time-changed walk from Euclidean balls around
/// its start, over a grid of radii and intrinsic times.
pub fn exit_tail_experiment(ens: &Ensemble, xi: f64, radii: &[f64], times: &[f64], replicas: usize, batches: usize) -> Result<ExitTailReport> {
    check_times(times)?;
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Parameter("radii must be positive".into()));
    }
    if batches == 0 || replicas < batches {
        return Err(Error::Parameter(format!("cannot split {replicas} replicas into {batches} batches")));
    }
    let s_max = *times.last().expect("nonempty");
    let exits = ens.run(tag::EXIT, Some(xi), true, replicas, |ctx, rng| {
        let hs = ctx.holes.expect("strong structure requested");
        runs::strong_exit_times(&ctx.prepared.env, &hs.in_cxi, ctx.start, radii, s_max, rng)
    })?;
    let (counts, c_e, c_e_cube) = fitted_constants(radii, times, &exits);
    let probability = counts
        .iter()
        .map(|row| row.iter().map(|&c| binomial_ci(c, replicas as u64, 0.95)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let per = replicas / batches;
    let batch_c_e: Vec<f64> = (0..batches)
        .map(|b| {
            let end = if b + 1 == batches { replicas } else { (b + 1) * per };
            fitted_constants(radii, times, &exits[b * per..end]).1
        })
        .collect();
    let lo = batch_c_e.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = batch_c_e.iter().copied().fold(0.0, f64::max);
    Ok(ExitTailReport {
        xi,
        radii: radii.to_vec(),
        times: times.to_vec(),
        probability,
        c_e,
        c_e_cube,
        batch_c_e,
        batch_spread: (hi - lo) / lo,
        replicas,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ChemicalDistanceReport {
    pub xi: f64,
    pub min_separation: f64,
    pub pairs: usize,
    pub unreachable: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub mean_ratio: MeanSe,
    /// Fit of the chemical distance against the `l1` distance.
    pub fit: Ols,
}

/// Default smallest `l1` separation of sampled pairs, `(ln L)^2`.
pub fn default_min_separation(side: usize) -> f64 {
    (side as f64).ln().powi(2)
}

/// Chemical distances on `C^xi` between random pairs at `l1` distance at
/// least `min_separation`: `sources` uniform points of `C^xi`, each with
/// `targets` uniform partners.
pub fn chemical_distance_experiment(
    prepared: &Prepared,
    xi: f64,
    sources: usize,
    targets: usize,
    min_separation: f64,
    seed: u64,
) -> Result<ChemicalDistanceReport> {
    let env = &prepared.env;
    let spec = env.spec();
    let hs = prepared.strong(xi)?;
    let members: Vec<usize> = (0..spec.num_vertices()).filter(|&v| hs.in_cxi[v]).collect();
    if members.len() < 2 {
        return Err(Error::Degenerate("the strong cluster has fewer than two vertices".into()));
    }
    let metric = ChemicalMetric::new(env, &hs);
    let per_source = replicate(sources, |i| {
        let mut rng = stream(mix(seed, &[tag::CHEM]), domain::AUX, i as u64);
        let x = members[rng.random_range(0..members.len())];
        let dist = metric.distances_from(x)?;
        let mut out = Vec::with_capacity(targets);
        let mut unreachable = 0;
        let mut attempts = 0;
        while out.len() + unreachable < targets {
            attempts += 1;
            if attempts > 1000 * targets.max(1) {
                return Err(Error::Degenerate(format!("no targets at distance {min_separation} from {x}")));
            }
            let y = members[rng.random_range(0..members.len())];
            let l1 = spec.l1_distance(x, y) as f64;
            if l1 < min_separation {
                continue;
            }
            if dist[y] == UNREACHABLE {
                unreachable += 1;
            } else {
                out.push((l1, dist[y] as f64));
            }
        }
        Ok((out, unreachable))
    })?;
    let unreachable = per_source.iter().map(|p| p.1).sum();
    let pairs: Vec<(f64, f64)> = per_source.into_iter().flat_map(|p| p.0).collect();
    let ratios: Vec<f64> = pairs.iter().map(|(l, d)| d / l).collect();
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok(ChemicalDistanceReport {
        xi,
        min_separation,
        pairs: pairs.len(),
        unreachable,
        min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        max_ratio: ratios.iter().copied().fold(0.0, f64::max),
        mean_ratio: mean_se(&ratios)?,
        fit: ols(&xs, &ys)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PoincareScalingReport {
    pub operator: WalkOperator,
    pub ns: Vec<usize>,
    /// `log A_n` over environments.
    pub log_a: Vec<MeanSe>,
    /// Slope of `log A_n` against `log n`, one per environment.
    pub slopes: Vec<f64>,
    pub slope: MeanSe,
    /// Slopes of the first and second half of the environments, with four
    /// or more environments.
    pub batches: Option<(MeanSe, MeanSe)>,
}

/// Poincaré constants on boxes of half-side `n` for each environment of the
/// recipe's ensemble, and the growth exponent of `A_n`.
pub fn poincare_scaling_experiment(recipe: &EnvRecipe, op: WalkOperator, ns: &[usize], replicas: usize) -> Result<PoincareScalingReport> {
    if ns.len() < 3 {
        return Err(Error::SampleSize { needed: 3, got: ns.len() });
    }
    if replicas < 2 {
        return Err(Error::SampleSize { needed: 2, got: replicas });
    }
    let logs = replicate(replicas, |i| {
        let env = recipe.sample_replica(i as u64)?;
        ns.iter()
            .map(|&n| Ok(poincare_constant(&env, op, n)?.a_n.ln()))
            .collect::<Result<Vec<f64>>>()
    })?;
    let ln: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let slopes = logs.iter().map(|l| Ok(ols(&ln, l)?.slope)).collect::<Result<Vec<f64>>>()?;
    let log_a = (0..ns.len())
        .map(|k| mean_se(&logs.iter().map(|l| l[k]).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let half = replicas / 2;
    Ok(PoincareScalingReport {
        operator: op,
        ns: ns.to_vec(),
        log_a,
        slope: mean_se(&slopes)?,
        batches: if replicas >= 4 { Some((mean_se(&slopes[..half])?, mean_se(&slopes[half..])?)) } else { None },
        slopes,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HoleVolumeReport {
    pub xi: f64,
    pub sides: Vec<usize>,
    /// Largest hole volume on the whole torus, `[side][replica]`.
    pub max_volume: Vec<Vec<usize>>,
    pub mean_log_max: Vec<MeanSe>,
    /// Fit of `ln max(1, V_max)` against `ln L` over all replicas.
    pub fit: Ols,
}

/// Largest hole volume on tori of the given sides.
pub fn hole_volume_experiment(recipe: &EnvRecipe, xi: f64, sides: &[usize], replicas: usize) -> Result<HoleVolumeReport> {
    if sides.len() < 2 {
        return Err(Error::SampleSize { needed: 2, got: sides.len() });
    }
    let mut max_volume = Vec::with_capacity(sides.len());
    for &side in sides {
        let r = EnvRecipe { side, seed: mix(recipe.seed, &[side as u64]), ..recipe.clone() };
        let row = replicate(replicas, |i| {
            let env = r.sample_replica(i as u64)?;
            Ok(find_holes(&env, xi)?.holes.iter().map(|h| h.len()).max().unwrap_or(0))
        })?;
        max_volume.push(row);
    }
    let log = |v: usize| (v.max(1) as f64).ln();
    let mean_log_max = max_volume
        .iter()
        .map(|row| mean_se(&row.iter().map(|&v| log(v)).collect::<Vec<_>>()))
        .collect::<Result<Vec<_>>>()?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (row, &side) in max_volume.iter().zip(sides) {
        for &v in row {
            xs.push((side as f64).ln());
            ys.push(log(v));
        }
    }
    Ok(HoleVolumeReport { xi, sides: sides.to_vec(), max_volume, mean_log_max, fit: ols(&xs, &ys)? })
}

/// `P(sup_{s <= T} |X(s)| >= K sqrt(T))` for each horizon `T` and level `K`,
/// indexed `[horizon][level]`.
pub fn sup_displacement_tail(ens: &Ensemble, horizons: &[f64], levels: &[f64], replicas: usize) -> Result<Vec<Vec<BinomialCi>>> {
    check_times(horizons)?;
    horizons
        .iter()
        .enumerate()
        .map(|(h, &t)| {
            let sups = ens.run(mix(tag::SUP, &[h as u64]), None, false, replicas, |ctx, rng| {
                runs::sup_displacement(&ctx.prepared.env, ctx.start, t, rng)
            })?;
            levels
                .iter()
                .map(|&k| {
                    let c = sups.iter().filter(|&&s| s >= k * t.sqrt()).count() as u64;
                    binomial_ci(c, replicas as u64, 0.95)
                })
                .collect()
        })
        .collect()
}

/// `P(|X(t) - X^xi(t)| >= delta sqrt(t))`, both processes driven by one walk.
pub fn proximity_fraction(ens: &Ensemble, xi: f64, t: f64, delta: f64, replicas: usize) -> Result<BinomialCi> {
    check_times(&[t])?;
    let far = ens.run(tag::PAIRED, Some(xi), true, replicas, |ctx, rng| {
        let hs = ctx.holes.expect("strong structure requested");
        let (a, b) = runs::paired_positions(&ctx.prepared.env, &hs.in_cxi, ctx.start, t, rng)?;
        let d2: i64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        Ok((d2 as f64).sqrt() >= delta * t.sqrt())
    })?;
    binomial_ci(far.iter().filter(|&&f| f).count() as u64, replicas as u64, 0.95)
}

/// Quenched diffusivity on each of `envs` environments of the recipe.
pub fn quenched_sigma2_by_environment(
    recipe: &EnvRecipe,
    start: super::config::StartPolicy,
    horizon: f64,
    envs: usize,
    replicas: usize,
    seed: u64,
) -> Result<Vec<MeanSe>> {
    (0..envs)
        .map(|e| {
            let p = Prepared::sample(recipe, Some(e as u64))?;
            let ens = Ensemble::fixed(p, recipe.clone(), start, mix(seed, &[e as u64]));
            Ok(estimate_sigma2(&ens, &[horizon], replicas)?.last())
        })
        .collect()
}

/// Whether every pair of estimates agrees within `k` pooled SE.
pub fn pairwise_within(estimates: &[MeanSe], k: f64) -> bool {
    estimates.iter().enumerate().all(|(i, a)| {
        estimates[i + 1..].iter().all(|b| (a.mean - b.mean).abs() <= k * a.se.hypot(b.se))
    })
}

/// `xi 1{w >= xi}`, the environment compared with the original in the
/// monotonicity check.
pub fn thresholded(env: &Environment, xi: f64) -> Result<Environment> {
    env.map_values(format!("{}|threshold({xi})", env.law_tag()), |w| if w >= xi { xi } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::config::{Mode, StartPolicy};
    use crate::law::ConductanceLaw;

    fn constant_ensemble(side: usize, start: StartPolicy) -> Ensemble {
        let recipe = EnvRecipe::new(2, side, ConductanceLaw::Constant { value: 1.0 }, 1);
        Ensemble::new(recipe, Mode::Quenched, start, 2).unwrap()
    }

    #[test]
    fn homogeneous_sigma2() {
        let ens = constant_ensemble(64, StartPolicy::Origin);
        let s = estimate_sigma2(&ens, &[5.0, 10.0, 20.0], 4000).unwrap();
        assert!(s.last().within(0.5, 4.0), "{:?}", s.last());
        let slope = s.slope.unwrap();
        assert!((slope.slope - 0.5).abs() < 0.05);
        assert!(!s.origin_substituted);
    }

    #[test]
    fn estimates_are_reproducible() {
        let ens = constant_ensemble(32, StartPolicy::RandomInGiant);
        let a = estimate_sigma2(&ens, &[10.0], 50).unwrap().last();
        let b = estimate_sigma2(&ens, &[10.0], 50).unwrap().last();
        assert_eq!(a, b);
    }

    #[test]
    fn no_holes_means_full_fraction() {
        let ens = constant_ensemble(32, StartPolicy::RandomInGiant);
        let c = estimate_c_xi(&ens, 0.5, 10.0, 20).unwrap();
        assert_eq!(c.spatial.mean, 1.0);
        assert_eq!(c.temporal.mean, 1.0);
        let v = verify_variance_identity(&ens, 0.5, 20.0, 200).unwrap();
        assert_eq!(v.sigma2.mean, v.product);
        assert!(v.pass);
    }

    #[test]
    fn constant_samples_are_rejected() {
        let r = gaussianity_test(&vec![0.3; 2000]).unwrap();
        assert!(r.p_value < 1e-6);
        assert!(matches!(gaussianity_test(&[0.0; 10]), Err(Error::SampleSize { .. })));
    }

    #[test]
    fn exit_beyond_the_torus_never_happens() {
        let ens = constant_ensemble(16, StartPolicy::Origin);
        let r = exit_tail_experiment(&ens, 0.5, &[2.0, 1000.0], &[0.05, 1.0, 4.0], 400, 2).unwrap();
        for ci in &r.probability[1] {
            assert_eq!(ci.successes, 0);
        }
        // exiting a ball of radius 2 takes at least 3 jumps
        let bound = 1.0 - (-0.05f64).exp();
        assert!(r.probability[0][0].estimate <= bound);
    }

    #[test]
    fn homogeneous_chemical_distance_is_l1() {
        let recipe = EnvRecipe::new(2, 32, ConductanceLaw::Constant { value: 1.0 }, 1);
        let p = Prepared::sample(&recipe, None).unwrap();
        let r = chemical_distance_experiment(&p, 0.5, 4, 20, 5.0, 3).unwrap();
        assert_eq!(r.min_ratio, 1.0);
        assert_eq!(r.max_ratio, 1.0);
        assert_eq!(r.unreachable, 0);
    }
}
