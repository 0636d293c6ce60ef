//! Estimators and statistical tests built on the walk, geometry and
//! effective-graph layers, plus the configuration and output plumbing of the
//! experiment runner.

pub mod config;
pub mod ensemble;
pub mod estimators;
pub mod output;
pub mod runs;

pub use config::{EnvRecipe, ExperimentConfig, ExperimentKind, Mode, OutputNames, StartPolicy, SCHEMA_VERSION};
pub use ensemble::{replicate, Ensemble, Prepared, ReplicaContext, StartSampler};
pub use estimators::*;
pub use output::{rerun_from_manifest, run_experiment, run_to_dir, Manifest, ResultRow, ResultTable};
