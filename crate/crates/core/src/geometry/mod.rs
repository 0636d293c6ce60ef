//! Percolation geometry: clusters, holes, boundaries, chemical distances and
//! site-percolation path counts.

pub mod boundary;
pub mod chemical;
pub mod clusters;
pub mod holes;
pub mod sites;
pub mod union_find;

pub use boundary::{complement_components, interior_boundary, l_connected_components};
pub use chemical::{chemical_distance, ChemicalMetric, UNREACHABLE};
pub use clusters::{giant_cluster, label_clusters, ClusterLabeling, GiantCluster};
pub use holes::{decompose, decompose_masks, find_holes, hole_volume_stats, HoleSet, HoleStructure, HoleVolumeStats, NO_HOLE};
pub use sites::{min_open_sites_on_path, SiteField};
pub use union_find::UnionFind;
