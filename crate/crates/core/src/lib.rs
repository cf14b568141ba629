//! Segmentation-free object recognition building blocks for street-level
//! LiDAR point clouds.
//!
//! * [`roi`]: ground tiling and candidate-tile filtering.
//! * [`spin`]: spin images, PCA codebooks and part clustering.
//! * [`alignment`]: 4-DOF ICP, shape-feature similarity and agglomerative
//!   group alignment.
//! * [`octree`] and [`shape_dist`]: exact and hierarchical shape
//!   distributions (D2, A3, T3, R3).
//! * [`eval`]: within/across-category distance statistics.
//! * [`synth`]: seeded synthetic objects and scenes.

pub mod alignment;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod histogram;
pub mod io;
pub mod octree;
pub mod roi;
pub mod shape_dist;
pub mod spatial;
pub mod spin;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{apply_transform, Aabb, Point, PointCloud, Transform4Dof};
pub use histogram::{emd_1d, Histogram1D};
pub use octree::{build_octree, Octree, OctreeConfig, OctreeNode, RepPoint};
pub use shape_dist::{exact_sd, hsd, FeatureKind, SDConfig, SDFeature};
