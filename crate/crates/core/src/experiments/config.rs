//! Experiment configuration files.

use serde::{Deserialize, Serialize};

use crate::env::{sample_environment, Environment};
use crate::error::{Error, Result};
use crate::lattice::{Boundary, LatticeSpec};
use crate::law::ConductanceLaw;
use crate::rng::{domain, mix};

pub const SCHEMA_VERSION: u32 = 1;

/// How to build an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvRecipe {
    pub dim: usize,
    pub side: usize,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    pub law: ConductanceLaw,
    pub seed: u64,
}

fn default_boundary() -> Boundary {
    Boundary::Torus
}

impl EnvRecipe {
    pub fn new(dim: usize, side: usize, law: ConductanceLaw, seed: u64) -> Self {
        EnvRecipe { dim, side, boundary: Boundary::Torus, law, seed }
    }

    pub fn spec(&self) -> Result<LatticeSpec> {
        LatticeSpec::new(self.dim, self.side, self.boundary)
    }

    /// Seed of environment number `index` of an ensemble.
    pub fn replica_seed(&self, index: u64) -> u64 {
        mix(self.seed, &[domain::REPLICA_ENV, index])
    }

    /// The environment with the recipe seed.
    pub fn sample(&self) -> Result<Environment> {
        sample_environment(&self.spec()?, &self.law, self.seed)
    }

    /// Environment number `index` of an ensemble.
    pub fn sample_replica(&self, index: u64) -> Result<Environment> {
        sample_environment(&self.spec()?, &self.law, self.replica_seed(index))
    }
}

/// Quenched: one environment, many walks. Annealed: a fresh environment per walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Quenched,
    Annealed,
}

/// Where walks start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartPolicy {
    /// The cluster vertex nearest to the lattice origin.
    #[default]
    Origin,
    /// A cluster vertex drawn with probability proportional to `n(x)`.
    RandomInGiant,
}

impl std::str::FromStr for StartPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "origin" => Ok(StartPolicy::Origin),
            "random-in-giant" => Ok(StartPolicy::RandomInGiant),
            other => Err(Error::Parameter(format!("unknown start policy '{other}'"))),
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_batches() -> usize {
    2
}

/// The experiment to run with its own parameters. Shared parameters (xi,
/// horizons, replicas) live in [`ExperimentConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Diffusivity of `X` at each horizon.
    Sigma2,
    /// Time fraction on the strong cluster, temporal and spatial, for each xi.
    CXi,
    /// `c(xi) sigma^2(xi)` against `sigma^2` for each xi, at the first horizon.
    VarianceIdentity,
    /// KS test of one coordinate at the first horizon against the normal law.
    Gaussianity {
        #[serde(default = "default_true")]
        jitter: bool,
    },
    /// Exact return probabilities at the given times; uses the first xi if any.
    KernelDecay { times: Vec<f64>, burn_in: f64 },
    /// Exit probabilities of the time-changed walk over radii x horizons.
    ExitTail {
        radii: Vec<f64>,
        #[serde(default = "default_batches")]
        batches: usize,
    },
    /// Chemical distances between sampled pairs of the strong cluster.
    ChemicalDistance { sources: usize, targets_per_source: usize },
    /// Poincaré constants on boxes of half-sides `ns`; uses the first xi if any.
    PoincareScaling { ns: Vec<usize> },
    /// Largest hole volume on tori of the given sides, for the first xi.
    HoleVolume { sides: Vec<usize> },
    /// Block colour fractions of nested Bernoulli configurations.
    Renormalization { q: f64, p: f64, scale: usize },
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Sigma2 => "sigma2",
            ExperimentKind::CXi => "c_xi",
            ExperimentKind::VarianceIdentity => "variance_identity",
            ExperimentKind::Gaussianity { .. } => "gaussianity",
            ExperimentKind::KernelDecay { .. } => "kernel_decay",
            ExperimentKind::ExitTail { .. } => "exit_tail",
            ExperimentKind::ChemicalDistance { .. } => "chemical_distance",
            ExperimentKind::PoincareScaling { .. } => "poincare_scaling",
            ExperimentKind::HoleVolume { .. } => "hole_volume",
            ExperimentKind::Renormalization { .. } => "renormalization",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputNames {
    pub csv: String,
    pub manifest: String,
}

impl Default for OutputNames {
    fn default() -> Self {
        OutputNames { csv: "results.csv".into(), manifest: "manifest.json".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: ExperimentKind,
    pub env: EnvRecipe,
    #[serde(default)]
    pub xi: Vec<f64>,
    #[serde(default)]
    pub horizons: Vec<f64>,
    pub replicas: usize,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub start: StartPolicy,
    /// Master seed of the walks and other per-replica randomness.
    pub seed: u64,
    #[serde(default)]
    pub output: OutputNames,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind, env: EnvRecipe, replicas: usize, seed: u64) -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            experiment,
            env,
            xi: Vec::new(),
            horizons: Vec::new(),
            replicas,
            mode: Mode::Quenched,
            start: StartPolicy::Origin,
            seed,
            output: OutputNames::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "config schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.env.spec()?;
        self.env.law.validate()?;
        let needs_se = !matches!(
            self.experiment,
            ExperimentKind::KernelDecay { .. } | ExperimentKind::Renormalization { .. }
        );
        if needs_se && self.replicas < 2 {
            return Err(Error::Parameter(format!(
                "{} reports standard errors and needs at least 2 replicas",
                self.experiment.name()
            )));
        }
        if self.replicas == 0 {
            return Err(Error::Parameter("need at least one replica".into()));
        }
        if let Some(h) = self.horizons.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
            return Err(Error::Parameter(format!("horizons must be positive, got {h}")));
        }
        if let Some(x) = self.xi.iter().find(|x| !(**x > 0.0 && **x <= 1.0)) {
            return Err(Error::Parameter(format!("xi must lie in (0, 1], got {x}")));
        }
        let needs_horizon = matches!(
            self.experiment,
            ExperimentKind::Sigma2
                | ExperimentKind::CXi
                | ExperimentKind::VarianceIdentity
                | ExperimentKind::Gaussianity { .. }
                | ExperimentKind::ExitTail { .. }
        );
        if needs_horizon && self.horizons.is_empty() {
            return Err(Error::Parameter(format!("{} needs at least one horizon", self.experiment.name())));
        }
        let needs_xi = matches!(
            self.experiment,
            ExperimentKind::CXi
                | ExperimentKind::VarianceIdentity
                | ExperimentKind::ExitTail { .. }
                | ExperimentKind::ChemicalDistance { .. }
                | ExperimentKind::HoleVolume { .. }
        );
        if needs_xi && self.xi.is_empty() {
            return Err(Error::Parameter(format!("{} needs at least one xi", self.experiment.name())));
        }
        Ok(())
    }

    /// JSON with a fixed field order; the manifest hash is taken over it.
    pub fn canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_defaults() {
        let text = r#"{
            "schema_version": 1,
            "experiment": {"kind": "gaussianity"},
            "env": {"dim": 2, "side": 32, "law": {"kind": "constant", "value": 1.0}, "seed": 7},
            "horizons": [10.0],
            "replicas": 4,
            "seed": 1
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::Gaussianity { jitter: true });
        assert_eq!(cfg.mode, Mode::Quenched);
        assert_eq!(cfg.env.boundary, Boundary::Torus);
        let again = ExperimentConfig::from_json(&cfg.canonical_json().unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_bad_configs() {
        let env = EnvRecipe::new(2, 16, ConductanceLaw::Constant { value: 1.0 }, 0);
        let mut cfg = ExperimentConfig::new(ExperimentKind::Sigma2, env, 1, 0);
        cfg.horizons = vec![1.0];
        assert!(cfg.validate().is_err());
        cfg.replicas = 2;
        assert!(cfg.validate().is_ok());
        cfg.schema_version = 99;
        assert!(matches!(cfg.validate(), Err(Error::Format(_))));
    }
}
