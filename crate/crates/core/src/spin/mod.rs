//! Spin images, PCA codebooks over them, and k-means grouping of the encoded
//! points into parts.

mod cluster;
mod codebook;
mod image;

pub use cluster::{cluster_parts, PartLabeling};
pub use codebook::{
    encode, image_patches, train_codebook, Codebook, CodebookKind, PointCode, CODEBOOK_SIZE, MIN_TRAINING_IMAGES,
    PATCH_DIMS, PATCH_SIZE,
};
pub use image::{
    default_support_radius, estimate_normals, spin_image_at, AxisMode, SpinImage, SpinImageGenerator, SPIN_COLS,
    SPIN_DIMS, SPIN_ROWS,
};

/// CSV of per-point codes: `point_index,c0,...`.
pub fn codes_to_csv(codes: &[PointCode]) -> String {
    let width = codes.first().map_or(0, |c| c.coeffs.len());
    let mut out = String::from("point_index");
    for j in 0..width {
        out.push_str(&format!(",c{j}"));
    }
    out.push('\n');
    for (i, c) in codes.iter().enumerate() {
        out.push_str(&i.to_string());
        for v in &c.coeffs {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}
