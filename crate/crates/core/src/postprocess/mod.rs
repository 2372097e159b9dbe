//! Turning converged MEM positions into a modal clustering partition.

mod merge;
mod partition;
mod union_find;
mod volume;

pub use merge::{merge_tight_clusters, ModeSet};
pub use partition::{
    attraction_partition_grid, default_merge_tol, denoise_modes, lattice_nodes, modal_cluster, modal_cluster_detailed,
    AttractionGrid, ClusterConfig, Denoise, ModalPartition, REASSIGNMENT_RULE,
};
pub use union_find::UnionFind;
pub use volume::{
    density_threshold, gaussian_ellipsoid_log_volume, log_volume_data_box, log_volume_gaussian_ellipsoid,
    log_volume_min_of, log_volume_pca_box, VolumeEstimate, VolumeMethod,
};
