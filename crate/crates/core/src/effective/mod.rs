//! Effective conductances, Dirichlet forms, spectral gaps and exact heat
//! kernels.

pub mod elimination;
pub mod kernel;
pub mod spectral;
pub mod weights;

pub use elimination::{eliminate, Elimination, GroundedLaplacian, WeightedGraph};
pub use kernel::{heat_kernel_exact, heat_kernel_multi, JumpChain, POISSON_TAIL};
pub use spectral::{box_component, dense_gap, generalized_gap, poincare_constant, BoxComponent, SpectralReport, WalkOperator};
pub use weights::{
    directed_rates, dirichlet_form, effective_conductances, effective_conductances_with, next_point_distribution,
    to_triplets, EffectiveWeights, FormWeights, WeightEntry,
};
