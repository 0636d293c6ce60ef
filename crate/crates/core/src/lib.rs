//! Simulation and verification toolkit for random walks among i.i.d. random
//! conductances on `Z^d`.
//!
//! The crate builds environments on finite boxes and tori, extracts the
//! percolation geometry (clusters, holes, chemical distances, renormalised
//! boxes), simulates the constant-speed walk and its time change on the strong
//! cluster, computes effective conductances, spectral gaps and exact heat
//! kernels, and runs the statistical experiments that tie these together.

pub mod effective;
pub mod env;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod lattice;
pub mod law;
pub mod renorm;
pub mod rng;
pub mod stats;
pub mod walk;

pub use env::{sample_environment, EdgeMask, Environment};
pub use error::{Error, Result};
pub use lattice::{Boundary, BoxRegion, LatticeSpec};
pub use law::ConductanceLaw;
