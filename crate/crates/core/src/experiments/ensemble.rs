//! Prepared environments, start sampling and replica loops.

use rand::Rng;
use rayon::prelude::*;

use std::borrow::Cow;

use rand_chacha::ChaCha8Rng;

use super::config::{EnvRecipe, Mode, StartPolicy};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::geometry::clusters::SUBCRITICAL_DENSITY;
use crate::geometry::{decompose, giant_cluster, label_clusters, GiantCluster, HoleStructure};
use crate::rng::{domain, mix, stream};

/// Environments drawn before giving up on finding a supercritical one.
pub const MAX_RESAMPLES: usize = 100;

/// An environment with its giant cluster of positive edges.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub env: Environment,
    pub giant: GiantCluster,
    pub in_giant: Vec<bool>,
    /// Environments rejected for lacking a giant cluster before this one.
    pub rejected: usize,
}

impl Prepared {
    pub fn new(env: Environment) -> Result<Self> {
        let labels = label_clusters(env.spec(), &env.threshold_mask(0.0));
        let giant = giant_cluster(&labels);
        if giant.size < 2 {
            return Err(Error::Degenerate("the environment has no cluster with an edge".into()));
        }
        let in_giant = (0..env.spec().num_vertices()).map(|v| labels.label(v) == giant.id).collect();
        Ok(Prepared { env, giant, in_giant, rejected: 0 })
    }

    fn acceptable(&self) -> bool {
        self.giant.density >= SUBCRITICAL_DENSITY
    }

    /// Environment `index` of the recipe's ensemble (the recipe seed itself
    /// when `index` is `None`), resampled while its giant cluster is absent.
    pub fn sample(recipe: &EnvRecipe, index: Option<u64>) -> Result<Self> {
        let mut rejected = 0;
        for attempt in 0..MAX_RESAMPLES as u64 {
            let env = match (index, attempt) {
                (None, 0) => recipe.sample()?,
                (None, a) => recipe.sample_replica(u64::MAX - a)?,
                (Some(i), 0) => recipe.sample_replica(i)?,
                (Some(i), a) => recipe.sample_replica(crate::rng::mix(i, &[a]))?,
            };
            match Prepared::new(env) {
                Ok(p) if p.acceptable() => return Ok(Prepared { rejected, ..p }),
                _ => rejected += 1,
            }
        }
        Err(Error::Degenerate(format!("no supercritical environment in {MAX_RESAMPLES} draws")))
    }

    pub fn strong(&self, xi: f64) -> Result<HoleStructure> {
        decompose(&self.env, xi)
    }

    /// `sum n(x) 1{x in C^xi} / sum n(x)` over the giant cluster.
    pub fn spatial_fraction(&self, in_cxi: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (v, &g) in self.in_giant.iter().enumerate() {
            if g {
                let n = self.env.weight_unchecked(v);
                den += n;
                if in_cxi[v] {
                    num += n;
                }
            }
        }
        num / den
    }
}

/// Draws start vertices from a member set.
#[derive(Debug, Clone)]
pub struct StartSampler {
    policy: StartPolicy,
    vertices: Vec<usize>,
    cumulative: Vec<f64>,
    nearest: usize,
    origin: usize,
}

impl StartSampler {
    pub fn new(env: &Environment, members: &[bool], policy: StartPolicy) -> Result<Self> {
        let spec = env.spec();
        let vertices: Vec<usize> = (0..members.len()).filter(|&v| members[v]).collect();
        if vertices.is_empty() {
            return Err(Error::Degenerate("no vertex to start from".into()));
        }
        let mut acc = 0.0;
        let cumulative = vertices
            .iter()
            .map(|&v| {
                acc += env.weight_unchecked(v);
                acc
            })
            .collect();
        let origin = spec.origin();
        let nearest = *vertices
            .iter()
            .min_by(|&&a, &&b| {
                spec.euclidean_distance(origin, a).total_cmp(&spec.euclidean_distance(origin, b)).then(a.cmp(&b))
            })
            .expect("nonempty");
        Ok(StartSampler { policy, vertices, cumulative, nearest, origin })
    }

    /// Whether the origin itself had to be replaced by the nearest member.
    pub fn origin_substituted(&self) -> bool {
        self.nearest != self.origin
    }

    pub fn nearest_to_origin(&self) -> usize {
        self.nearest
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self.policy {
            StartPolicy::Origin => self.nearest,
            StartPolicy::RandomInGiant => {
                let total = *self.cumulative.last().expect("nonempty");
                let u = rng.random::<f64>() * total;
                let i = self.cumulative.partition_point(|&c| c <= u).min(self.vertices.len() - 1);
                self.vertices[i]
            }
        }
    }
}

/// Where replica environments and random streams come from.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub recipe: EnvRecipe,
    pub mode: Mode,
    pub start: StartPolicy,
    pub seed: u64,
    quenched: Option<Prepared>,
}

/// One replica's environment, optional strong-cluster structure and start.
pub struct ReplicaContext<'a> {
    pub prepared: &'a Prepared,
    pub holes: Option<&'a HoleStructure>,
    pub start: usize,
    pub index: usize,
}

impl Ensemble {
    pub fn new(recipe: EnvRecipe, mode: Mode, start: StartPolicy, seed: u64) -> Result<Self> {
        let quenched = match mode {
            Mode::Quenched => Some(Prepared::sample(&recipe, None)?),
            Mode::Annealed => None,
        };
        Ok(Ensemble { recipe, mode, start, seed, quenched })
    }

    /// A quenched ensemble on a given environment.
    pub fn fixed(prepared: Prepared, recipe: EnvRecipe, start: StartPolicy, seed: u64) -> Self {
        Ensemble { recipe, mode: Mode::Quenched, start, seed, quenched: Some(prepared) }
    }

    pub fn quenched_env(&self) -> Option<&Prepared> {
        self.quenched.as_ref()
    }

    /// Environments rejected while sampling the quenched environment.
    pub fn rejected(&self) -> usize {
        self.quenched.as_ref().map_or(0, |p| p.rejected)
    }

    pub fn environment(&self, index: usize) -> Result<Cow<'_, Prepared>> {
        match &self.quenched {
            Some(p) => Ok(Cow::Borrowed(p)),
            None => Ok(Cow::Owned(Prepared::sample(&self.recipe, Some(index as u64))?)),
        }
    }

    /// Walker stream of replica `index` within the sub-experiment `tag`.
    pub fn walk_rng(&self, tag: u64, index: usize) -> ChaCha8Rng {
        stream(mix(self.seed, &[tag]), domain::WALKER, index as u64)
    }

    pub fn aux_rng(&self, tag: u64, index: usize) -> ChaCha8Rng {
        stream(mix(self.seed, &[tag]), domain::AUX, index as u64)
    }

    fn start_rng(&self, tag: u64, index: usize) -> ChaCha8Rng {
        stream(mix(self.seed, &[tag]), domain::START, index as u64)
    }

    /// Runs `f` once per replica. With `xi` the strong-cluster structure is
    /// passed along and, if `strong_start`, the start is drawn from `C^xi`
    /// rather than from the giant positive cluster.
    pub fn run<T: Send>(
        &self,
        tag: u64,
        xi: Option<f64>,
        strong_start: bool,
        replicas: usize,
        f: impl Fn(&ReplicaContext<'_>, &mut ChaCha8Rng) -> Result<T> + Sync,
    ) -> Result<Vec<T>> {
        let one = |p: &Prepared, hs: Option<&HoleStructure>, sampler: &StartSampler, i: usize| {
            let start = sampler.draw(&mut self.start_rng(tag, i));
            let ctx = ReplicaContext { prepared: p, holes: hs, start, index: i };
            f(&ctx, &mut self.walk_rng(tag, i))
        };
        match &self.quenched {
            Some(p) => {
                let hs = xi.map(|x| p.strong(x)).transpose()?;
                let members = hs.as_ref().filter(|_| strong_start).map_or(&p.in_giant, |h| &h.in_cxi);
                let sampler = StartSampler::new(&p.env, members, self.start)?;
                replicate(replicas, |i| one(p, hs.as_ref(), &sampler, i))
            }
            None => replicate(replicas, |i| {
                let p = Prepared::sample(&self.recipe, Some(i as u64))?;
                let hs = xi.map(|x| p.strong(x)).transpose()?;
                let members = hs.as_ref().filter(|_| strong_start).map_or(&p.in_giant, |h| &h.in_cxi);
                let sampler = StartSampler::new(&p.env, members, self.start)?;
                one(&p, hs.as_ref(), &sampler, i)
            }),
        }
    }

    /// Whether the quenched start had to move off the origin.
    pub fn origin_substituted(&self, xi: Option<f64>) -> Result<bool> {
        match &self.quenched {
            Some(p) => {
                let hs = xi.map(|x| p.strong(x)).transpose()?;
                let members = hs.as_ref().map_or(&p.in_giant, |h| &h.in_cxi);
                Ok(StartSampler::new(&p.env, members, self.start)?.origin_substituted())
            }
            None => Ok(false),
        }
    }
}

/// Runs `f` on replicas `0..n` concurrently and returns results in index
/// order. The first failing replica aborts with its index.
pub fn replicate<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..n)
        .into_par_iter()
        .map(|i| f(i).map_err(|e| Error::Replica { index: i, reason: e.to_string() }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSpec;
    use crate::law::ConductanceLaw;

    #[test]
    fn weighted_start_frequencies() {
        let spec = LatticeSpec::free(2, 2).unwrap();
        let mut env = Environment::constant(&spec, 1.0).unwrap();
        env.set_conductance(0, 1, 0.5).unwrap();
        // n = (1.5, 1.5, 1, 1) on vertices 0,1,2,3... vertex 2 = (0,1)
        let members = vec![true; 4];
        let s = StartSampler::new(&env, &members, StartPolicy::RandomInGiant).unwrap();
        let mut rng = crate::rng::stream(3, 0, 0);
        let mut counts = [0usize; 4];
        let r = 100_000;
        for _ in 0..r {
            counts[s.draw(&mut rng)] += 1;
        }
        let total: f64 = (0..4).map(|v| env.weight_unchecked(v)).sum();
        for v in 0..4 {
            let p = env.weight_unchecked(v) / total;
            let se = (p * (1.0 - p) / r as f64).sqrt();
            assert!((counts[v] as f64 / r as f64 - p).abs() < 4.0 * se);
        }
    }

    #[test]
    fn subcritical_recipes_are_rejected() {
        let recipe = EnvRecipe::new(2, 16, ConductanceLaw::Bernoulli { q: 0.0 }, 1);
        assert!(Prepared::sample(&recipe, None).is_err());
        let recipe = EnvRecipe::new(2, 16, ConductanceLaw::Bernoulli { q: 0.9 }, 1);
        let p = Prepared::sample(&recipe, Some(3)).unwrap();
        assert_eq!(p.rejected, 0);
        assert!(p.giant.density > 0.5);
    }

    #[test]
    fn replica_errors_carry_the_index() {
        let r = replicate(10, |i| if i == 7 { Err(Error::Domain("boom".into())) } else { Ok(i) });
        assert!(matches!(r, Err(Error::Replica { index: 7, .. })));
    }
}
