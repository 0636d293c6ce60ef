//! Result tables, CSV output and reproducibility manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, ExperimentKind};
use super::ensemble::{Ensemble, Prepared};
use super::estimators::*;
use crate::effective::WalkOperator;
use crate::error::{Error, Result};
use crate::renorm::{estimate_renormalized_params, ClassifyOptions};
use crate::stats::MeanSe;

pub const CSV_HEADER: [&str; 6] = ["experiment", "quantity", "estimate", "se", "replicas", "metadata"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub quantity: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub replicas: usize,
    pub metadata: String,
}

/// Rows in the order the experiment produced them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

impl ResultTable {
    fn push(&mut self, experiment: &str, quantity: impl Into<String>, estimate: f64, se: Option<f64>, replicas: usize, metadata: impl Into<String>) {
        self.rows.push(ResultRow {
            experiment: experiment.into(),
            quantity: quantity.into(),
            estimate,
            se,
            replicas,
            metadata: metadata.into(),
        });
    }

    fn push_mean(&mut self, experiment: &str, quantity: impl Into<String>, m: MeanSe, metadata: impl Into<String>) {
        self.push(experiment, quantity, m.mean, Some(m.se), m.n, metadata);
    }

    pub fn get(&self, quantity: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.quantity == quantity)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let io = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(CSV_HEADER).map_err(io)?;
        for r in &self.rows {
            w.write_record([
                r.experiment.clone(),
                r.quantity.clone(),
                real(r.estimate),
                r.se.map(real).unwrap_or_default(),
                r.replicas.to_string(),
                r.metadata.clone(),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Runs the configured experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let name = cfg.experiment.name();
    let mut t = ResultTable::default();
    let n = cfg.replicas;
    let last_h = cfg.horizons.last().copied();
    let ensemble = || Ensemble::new(cfg.env.clone(), cfg.mode, cfg.start, cfg.seed);
    match &cfg.experiment {
        ExperimentKind::Sigma2 => {
            let ens = ensemble()?;
            let s = estimate_sigma2(&ens, &cfg.horizons, n)?;
            for (time, m) in s.times.iter().zip(&s.per_time) {
                t.push_mean(name, format!("sigma2(t={time})"), *m, "");
            }
            for (i, m) in s.per_coordinate.iter().enumerate() {
                t.push_mean(name, format!("sigma2_coord{i}"), *m, format!("t={}", s.times.last().expect("nonempty")));
            }
            if let Some(f) = s.slope {
                t.push(name, "sigma2_slope", f.slope, Some(f.slope_se), n, format!("times={}", fmt_list(&s.times)));
            }
            t.push(name, "rejected_environments", s.rejected as f64, None, n, "");
            t.push(name, "origin_substituted", f64::from(u8::from(s.origin_substituted)), None, n, "");
        }
        ExperimentKind::CXi => {
            let ens = ensemble()?;
            let h = last_h.expect("validated");
            for &xi in &cfg.xi {
                let c = estimate_c_xi(&ens, xi, h, n)?;
                t.push_mean(name, format!("c_temporal(xi={xi})"), c.temporal, format!("T={h}"));
                t.push_mean(name, format!("c_spatial(xi={xi})"), c.spatial, "");
                t.push(name, format!("c_difference(xi={xi})"), c.temporal.mean - c.spatial.mean, Some(c.combined_se()), n, "");
            }
        }
        ExperimentKind::VarianceIdentity => {
            let ens = ensemble()?;
            let h = cfg.horizons[0];
            for &xi in &cfg.xi {
                let v = verify_variance_identity(&ens, xi, h, n)?;
                t.push_mean(name, format!("c(xi={xi})"), v.c_xi, "");
                t.push_mean(name, "sigma2", v.sigma2, format!("T={h}"));
                t.push_mean(name, format!("sigma2_xi(xi={xi})"), v.sigma2_xi, format!("S={}", v.intrinsic_time));
                t.push(name, format!("c_sigma2_xi(xi={xi})"), v.product, Some(v.c_xi.mean * v.sigma2_xi.se), n, "");
                t.push(name, format!("identity_difference(xi={xi})"), v.difference, Some(v.pooled_se), n, format!("pass={}", v.pass));
            }
        }
        ExperimentKind::Gaussianity { jitter } => {
            let ens = ensemble()?;
            let h = cfg.horizons[0];
            let g = quenched_gaussianity(&ens, h, n, *jitter)?;
            let meta = format!("t={h} jitter={jitter}");
            t.push(name, "ks_statistic", g.ks.statistic, None, n, meta.clone());
            t.push(name, "ks_p_value", g.ks.p_value, None, n, meta.clone());
            t.push(name, "sigma", g.sigma, None, n, meta);
        }
        ExperimentKind::KernelDecay { times, burn_in } => {
            let p = Prepared::sample(&cfg.env, None)?;
            let k = kernel_decay_experiment(&p, cfg.xi.first().copied(), times, *burn_in)?;
            for ((time, q), s) in k.times.iter().zip(&k.return_probability).zip(&k.scaled) {
                t.push(name, format!("return_probability(t={time})"), *q, None, 1, "");
                t.push(name, format!("scaled_return(t={time})"), *s, None, 1, "");
            }
            t.push(name, "loglog_slope", k.fit.slope, Some(k.fit.slope_se), 1, format!("burn_in={burn_in}"));
            t.push(name, "max_scaled", k.max_scaled, None, 1, "");
            t.push(name, "max_rise", k.max_rise, None, 1, "");
            t.push(name, "envelope", k.envelope, None, 1, "");
        }
        ExperimentKind::ExitTail { radii, batches } => {
            let ens = ensemble()?;
            let xi = cfg.xi[0];
            let e = exit_tail_experiment(&ens, xi, radii, &cfg.horizons, n, *batches)?;
            for (r, row) in e.radii.iter().zip(&e.probability) {
                for (time, ci) in e.times.iter().zip(row) {
                    t.push(name, format!("exit_probability(r={r},t={time})"), ci.estimate, None, n, format!("ci95=[{} {}]", real(ci.lower), real(ci.upper)));
                }
            }
            t.push(name, "c_e", e.c_e, None, n, format!("xi={xi}"));
            t.push(name, "c_e_cube", e.c_e_cube, None, n, format!("cube_bound={}", e.cube_bound_holds()));
            for (b, c) in e.batch_c_e.iter().enumerate() {
                t.push(name, format!("c_e_batch{b}"), *c, None, n / batches, "");
            }
            t.push(name, "batch_spread", e.batch_spread, None, n, "");
        }
        ExperimentKind::ChemicalDistance { sources, targets_per_source } => {
            let p = Prepared::sample(&cfg.env, None)?;
            let sep = default_min_separation(cfg.env.side);
            for &xi in &cfg.xi {
                let c = chemical_distance_experiment(&p, xi, *sources, *targets_per_source, sep, cfg.seed)?;
                let meta = format!("xi={xi} min_separation={sep}");
                t.push(name, format!("slope(xi={xi})"), c.fit.slope, Some(c.fit.slope_se), c.pairs, meta.clone());
                t.push(name, format!("min_ratio(xi={xi})"), c.min_ratio, None, c.pairs, meta.clone());
                t.push(name, format!("max_ratio(xi={xi})"), c.max_ratio, None, c.pairs, meta.clone());
                t.push_mean(name, format!("mean_ratio(xi={xi})"), c.mean_ratio, meta.clone());
                t.push(name, format!("unreachable(xi={xi})"), c.unreachable as f64, None, c.pairs, meta);
            }
        }
        ExperimentKind::PoincareScaling { ns } => {
            let op = cfg.xi.first().map_or(WalkOperator::Raw, |&xi| WalkOperator::Effective { xi });
            let r = poincare_scaling_experiment(&cfg.env, op, ns, n)?;
            for (k, m) in r.ns.iter().zip(&r.log_a) {
                t.push_mean(name, format!("log_a(n={k})"), *m, "");
            }
            t.push_mean(name, "slope", r.slope, "");
            if let Some((a, b)) = r.batches {
                t.push_mean(name, "slope_batch0", a, "");
                t.push_mean(name, "slope_batch1", b, "");
            }
        }
        ExperimentKind::HoleVolume { sides } => {
            let xi = cfg.xi[0];
            let h = hole_volume_experiment(&cfg.env, xi, sides, n)?;
            for (side, m) in h.sides.iter().zip(&h.mean_log_max) {
                t.push_mean(name, format!("log_max_volume(L={side})"), *m, format!("xi={xi}"));
            }
            t.push(name, "loglog_slope", h.fit.slope, Some(h.fit.slope_se), n, format!("xi={xi}"));
        }
        ExperimentKind::Renormalization { q, p, scale } => {
            let r = estimate_renormalized_params(&cfg.env.spec()?, *q, *p, *scale, n, cfg.seed, ClassifyOptions::default(), 0.95)?;
            let meta = format!("q={q} p={p} N={scale}");
            for (label, ci) in [("white", r.white), ("pure_white", r.pure_white), ("immaculate", r.immaculate)] {
                t.push(name, format!("{label}_fraction"), ci.estimate, None, n, format!("{meta} ci95=[{} {}]", real(ci.lower), real(ci.upper)));
            }
            t.push(name, "theoretical_pure_white", r.theoretical_pure_white, None, n, meta.clone());
            t.push(name, "theoretical_immaculate", r.theoretical_immaculate, None, n, meta);
        }
    }
    Ok(t)
}

/// Seeds and hashes needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub config: ExperimentConfig,
    pub config_sha256: String,
    pub env_seed: u64,
    pub walk_seed: u64,
    pub csv: String,
    pub csv_sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: Manifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        if m.schema_version != super::config::SCHEMA_VERSION {
            return Err(Error::Format(format!("manifest schema version {} is not supported", m.schema_version)));
        }
        let hash = sha256_hex(m.config.canonical_json()?.as_bytes());
        if hash != m.config_sha256 {
            return Err(Error::Format("manifest config hash does not match its config".into()));
        }
        Ok(m)
    }
}

/// Runs `cfg` and writes the CSV and the manifest into `dir`.
pub fn run_to_dir(cfg: &ExperimentConfig, dir: impl AsRef<Path>) -> Result<(Manifest, PathBuf)> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let csv = run_experiment(cfg)?.to_csv()?;
    let csv_path = dir.join(&cfg.output.csv);
    fs::write(&csv_path, &csv)?;
    let manifest = Manifest {
        schema_version: super::config::SCHEMA_VERSION,
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        config_sha256: sha256_hex(cfg.canonical_json()?.as_bytes()),
        env_seed: cfg.env.seed,
        walk_seed: cfg.seed,
        csv: cfg.output.csv.clone(),
        csv_sha256: sha256_hex(csv.as_bytes()),
    };
    fs::write(dir.join(&cfg.output.manifest), serde_json::to_string_pretty(&manifest)?)?;
    Ok((manifest, csv_path))
}

/// Reruns the experiment recorded in a manifest into `dir` and reports
/// whether the new CSV is byte-identical to the recorded one.
pub fn rerun_from_manifest(manifest: impl AsRef<Path>, dir: impl AsRef<Path>) -> Result<(Manifest, bool)> {
    let old = Manifest::load(manifest)?;
    let (new, _) = run_to_dir(&old.config, dir)?;
    let same = new.csv_sha256 == old.csv_sha256;
    Ok((new, same))
}
