//! Object similarity from 4-DOF invariant shape features, yaw-only ICP, and
//! agglomerative alignment of an object group into one frame.

mod features;
mod group;
mod icp;

pub use features::{
    group_features, object_distance, shape_features, similarity_from_features, similarity_matrix, ShapeFeatureSet,
    ShapeRanges, SimilarityMatrix, SHAPE_BINS,
};
pub use group::{align_group, align_group_with_similarity, GroupAlignment, MergeRecord};
pub use icp::{icp_4dof, procrustes_4dof, IcpConfig, IcpResult};
