//! `rcm`: command line front end to the random conductance toolkit.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use rcwalk::effective::{
    effective_conductances, heat_kernel_exact, poincare_constant, JumpChain, WalkOperator,
};
use rcwalk::experiments::{rerun_from_manifest, run_to_dir, ExperimentConfig};
use rcwalk::geometry::{chemical_distance, decompose, hole_volume_stats};
use rcwalk::lattice::BoxRegion;
use rcwalk::renorm::{estimate_renormalized_params, ClassifyOptions};
use rcwalk::rng::{domain, stream};
use rcwalk::walk::simulate_walk;
use rcwalk::{sample_environment, Boundary, ConductanceLaw, Environment, LatticeSpec};

#[derive(Parser)]
#[command(name = "rcm", version, about = "Random walks among random conductances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample and inspect environments.
    #[command(subcommand)]
    Env(EnvCommand),
    /// Percolation geometry of a saved environment.
    #[command(subcommand)]
    Geom(GeomCommand),
    /// Block renormalisation statistics.
    #[command(subcommand)]
    Renorm(RenormCommand),
    /// Simulate the walk.
    #[command(subcommand)]
    Walk(WalkCommand),
    /// Effective conductances, spectral gaps and exact kernels.
    #[command(subcommand)]
    Eff(EffCommand),
    /// Configured experiments with CSV output and a manifest.
    #[command(subcommand)]
    Exp(ExpCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundaryArg {
    Torus,
    Free,
}

impl From<BoundaryArg> for Boundary {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::Torus => Boundary::Torus,
            BoundaryArg::Free => Boundary::Free,
        }
    }
}

#[derive(Args)]
struct LatticeArgs {
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long)]
    side: usize,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Torus)]
    boundary: BoundaryArg,
}

impl LatticeArgs {
    fn spec(&self) -> Result<LatticeSpec> {
        Ok(LatticeSpec::new(self.dim, self.side, self.boundary.into())?)
    }
}

#[derive(Subcommand)]
enum EnvCommand {
    /// Sample an environment and write it in the binary format.
    Sample {
        #[command(flatten)]
        lattice: LatticeArgs,
        /// Law such as `constant:1`, `bernoulli:0.6`, `two-point:0.5,0.1,1`,
        /// `zero-uniform:0.75` or `poly-tail:0.1`.
        #[arg(long)]
        law: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum GeomCommand {
    /// Hole statistics of the strong cluster at threshold `xi`.
    Holes {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        xi: f64,
        /// Half-side of the window counted in `count_intersecting`.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Chemical distance between two vertices of the strong cluster.
    Chemdist {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        xi: f64,
        /// Coordinates such as `3,4`.
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
    },
}

#[derive(Subcommand)]
enum RenormCommand {
    /// Fractions of white, pure white and immaculate blocks over replicas of
    /// nested Bernoulli configurations.
    Classify {
        #[command(flatten)]
        lattice: LatticeArgs,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        scale: usize,
        #[arg(long, default_value_t = 1)]
        replicas: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum WalkCommand {
    /// Run one walk and report its end point.
    Run {
        #[arg(long)]
        env: PathBuf,
        /// Start coordinates; the origin if absent.
        #[arg(long)]
        start: Option<String>,
        #[arg(long)]
        horizon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also print every jump as `[time, vertex]`.
        #[arg(long)]
        events: bool,
    },
}

#[derive(Subcommand)]
enum EffCommand {
    /// Effective conductances on the whole lattice as JSON lines.
    Weights {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        xi: f64,
    },
    /// Poincaré constant on `[-n, n]^d`.
    Gap {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        n: usize,
        /// Use the time-changed walk at this threshold instead of the walk itself.
        #[arg(long)]
        xi: Option<f64>,
    },
    /// Exact transition probabilities from one vertex.
    Kernel {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        start: Option<String>,
        #[arg(long)]
        time: f64,
        #[arg(long)]
        xi: Option<f64>,
        /// Only report entries at least this large.
        #[arg(long, default_value_t = 0.0)]
        min: f64,
    },
}

#[derive(Subcommand)]
enum ExpCommand {
    /// Run a configured experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rerun the experiment recorded in a manifest and compare outputs.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_env(path: &PathBuf) -> Result<Environment> {
    Environment::load(path).with_context(|| format!("reading environment {}", path.display()))
}

fn vertex(spec: &LatticeSpec, coords: Option<&str>) -> Result<usize> {
    let Some(text) = coords else {
        return Ok(spec.origin());
    };
    let c: Vec<usize> = text
        .split(',')
        .map(|s| s.trim().parse::<usize>().with_context(|| format!("bad coordinate '{s}'")))
        .collect::<Result<_>>()?;
    Ok(spec.index(&c)?)
}

fn print(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Env(EnvCommand::Sample { lattice, law, seed, out }) => {
            let spec = lattice.spec()?;
            let law: ConductanceLaw = law.parse()?;
            let env = sample_environment(&spec, &law, seed)?;
            env.save(&out)?;
            let open = spec.edge_slots().filter(|&s| env.slot_value(s) > 0.0).count();
            print(&json!({
                "file": out,
                "law": env.law_tag(),
                "seed": seed,
                "vertices": spec.num_vertices(),
                "edges": spec.num_edges(),
                "open_edges": open,
            }))
        }
        Command::Geom(GeomCommand::Holes { env, xi, n }) => {
            let env = load_env(&env)?;
            let spec = env.spec();
            let hs = decompose(&env, xi)?;
            let stats = hole_volume_stats(&hs.holes, spec, n.unwrap_or((spec.side() - 1) / 2))?;
            print(&json!({
                "xi": xi,
                "giant_density": hs.alpha_giant.density,
                "strong_density": hs.strong_giant.density,
                "holes": hs.holes.len(),
                "hole_volume": hs.holes.total_volume(),
                "stats": stats,
            }))
        }
        Command::Geom(GeomCommand::Chemdist { env, xi, from, to }) => {
            let env = load_env(&env)?;
            let (x, y) = (vertex(env.spec(), Some(&from))?, vertex(env.spec(), Some(&to))?);
            let d = chemical_distance(&env, xi, x, y)?;
            print(&json!({ "xi": xi, "chemical": d, "l1": env.spec().l1_distance(x, y) }))
        }
        Command::Renorm(RenormCommand::Classify { lattice, q, p, scale, replicas, seed }) => {
            let spec = lattice.spec()?;
            let r = estimate_renormalized_params(&spec, q, p, scale, replicas, seed, ClassifyOptions::default(), 0.95)?;
            print(&r)
        }
        Command::Walk(WalkCommand::Run { env, start, horizon, seed, events }) => {
            let env = load_env(&env)?;
            let spec = env.spec();
            let x0 = vertex(spec, start.as_deref())?;
            let mut rng = stream(seed, domain::WALKER, 0);
            let traj = simulate_walk(&env, x0, horizon, &mut rng)?;
            let mut out = json!({
                "start": spec.coords(x0),
                "horizon": horizon,
                "jumps": traj.num_jumps(),
                "end": spec.coords(traj.final_vertex()),
                "displacement": traj.displacement_at(spec, horizon),
            });
            if events {
                out["events"] = traj.events().map(|e| json!([e.time, e.vertex])).collect();
            }
            print(&out)
        }
        Command::Eff(EffCommand::Weights { env, xi }) => {
            let env = load_env(&env)?;
            let w = effective_conductances(&env, xi, &BoxRegion::whole(env.spec()))?;
            let mut out = std::io::stdout().lock();
            for e in w.entries() {
                writeln!(out, "{}", serde_json::to_string(&e)?)?;
            }
            Ok(())
        }
        Command::Eff(EffCommand::Gap { env, n, xi }) => {
            let env = load_env(&env)?;
            let op = match xi {
                Some(xi) => WalkOperator::Effective { xi },
                None => WalkOperator::Raw,
            };
            print(&poincare_constant(&env, op, n)?)
        }
        Command::Eff(EffCommand::Kernel { env, start, time, xi, min }) => {
            let env = load_env(&env)?;
            let spec = env.spec();
            let x = vertex(spec, start.as_deref())?;
            let chain = match xi {
                Some(xi) => JumpChain::from_effective(&effective_conductances(&env, xi, &BoxRegion::whole(spec))?, None)?,
                None => JumpChain::from_env(&env, None)?,
            };
            if chain.state_of(x).is_none() {
                bail!("the start vertex is not a state of the chain");
            }
            let p = heat_kernel_exact(&chain, x, time)?;
            let entries: Vec<_> = chain
                .states()
                .iter()
                .zip(&p)
                .filter(|(_, &q)| q >= min && q > 0.0)
                .map(|(&v, &q)| json!({ "vertex": spec.coords(v), "probability": q }))
                .collect();
            print(&json!({ "time": time, "entries": entries }))
        }
        Command::Exp(ExpCommand::Run { config, out }) => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("reading config {}", config.display()))?;
            let (manifest, csv) = run_to_dir(&cfg, &out)?;
            print(&json!({ "csv": csv, "csv_sha256": manifest.csv_sha256, "config_sha256": manifest.config_sha256 }))
        }
        Command::Exp(ExpCommand::Rerun { manifest, out }) => {
            let (m, same) = rerun_from_manifest(&manifest, &out)?;
            print(&json!({ "csv_sha256": m.csv_sha256, "identical": same }))?;
            if !same {
                bail!("rerun output differs from the recorded one");
            }
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    env_logger::init();
    run(Cli::parse())
}
