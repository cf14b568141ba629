use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::io::GrayImage;
use crate::spatial::KdTree;

/// Rows cover the signed height `beta` in `[-R, R]`.
pub const SPIN_ROWS: usize = 31;
/// Columns cover the radial distance `alpha` in `[0, R]`.
pub const SPIN_COLS: usize = 16;
pub const SPIN_DIMS: usize = SPIN_ROWS * SPIN_COLS;

const NORMAL_NEIGHBORS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AxisMode {
    /// Spin axis is the vertical through the point.
    #[default]
    GlobalZ,
    /// Spin axis is the PCA normal over the 16 nearest neighbors, flipped to
    /// point upward.
    LocalNormal,
}

/// A 31 x 16 spin image stored row-major (`row * SPIN_COLS + col`).
#[derive(Debug, Clone, PartialEq)]
pub struct SpinImage {
    grid: Vec<f64>,
    support_radius: f64,
    empty: bool,
}

impl SpinImage {
    pub fn from_grid(grid: Vec<f64>, support_radius: f64) -> Result<Self> {
        if grid.len() != SPIN_DIMS {
            return Err(Error::DimensionMismatch {
                expected: SPIN_DIMS,
                got: grid.len(),
            });
        }
        let empty = grid.iter().all(|v| *v == 0.0);
        Ok(Self {
            grid,
            support_radius,
            empty,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.grid[row * SPIN_COLS + col]
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// True when no neighbor fell inside the support radius.
    pub fn is_empty(&self) -> bool {
        self.empty
    }

    /// Grayscale rendering with the largest bin white and `beta = +R` at the
    /// top.
    pub fn to_gray(&self) -> GrayImage {
        let max = self.grid.iter().cloned().fold(0.0, f64::max);
        let mut img = GrayImage::new(SPIN_COLS, SPIN_ROWS);
        for row in 0..SPIN_ROWS {
            for col in 0..SPIN_COLS {
                let v = if max > 0.0 { self.get(row, col) / max } else { 0.0 };
                img.set(col, SPIN_ROWS - 1 - row, (255.0 * v).round() as u8);
            }
        }
        img
    }
}

/// Half the bounding-box diagonal.
pub fn default_support_radius(cloud: &PointCloud) -> f64 {
    0.5 * cloud.diameter()
}

/// Computes spin images for a cloud, sharing one spatial index (and normals,
/// in local-normal mode) across all points.
pub struct SpinImageGenerator<'a> {
    cloud: &'a PointCloud,
    tree: KdTree<'a>,
    normals: Option<Vec<Vector3<f64>>>,
    support_radius: f64,
}

impl<'a> SpinImageGenerator<'a> {
    pub fn new(cloud: &'a PointCloud, axis_mode: AxisMode, support_radius: f64) -> Result<Self> {
        if !(support_radius > 0.0 && support_radius.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "support radius must be positive, got {support_radius}"
            )));
        }
        let tree = KdTree::new(cloud.points());
        let normals = match axis_mode {
            AxisMode::GlobalZ => None,
            AxisMode::LocalNormal => Some(estimate_normals(&tree)),
        };
        Ok(Self {
            cloud,
            tree,
            normals,
            support_radius,
        })
    }

    pub fn compute(&self, index: usize) -> Result<SpinImage> {
        let pts = self.cloud.points();
        let p = pts.get(index).ok_or_else(|| {
            Error::InvalidConfig(format!("point index {index} out of range ({})", pts.len()))
        })?;
        let axis = self
            .normals
            .as_ref()
            .map_or(Vector3::z(), |n| n[index]);
        let r = self.support_radius;
        let mut grid = vec![0.0; SPIN_DIMS];
        let mut votes = 0usize;
        for j in self.tree.within_radius(p, r) {
            if j == index {
                continue;
            }
            let d = pts[j] - p;
            let beta = axis.dot(&d);
            let alpha = (d.norm_squared() - beta * beta).max(0.0).sqrt();
            bilinear_vote(&mut grid, alpha, beta, r);
            votes += 1;
        }
        let total: f64 = grid.iter().sum();
        if total > 0.0 {
            grid.iter_mut().for_each(|v| *v /= total);
        }
        Ok(SpinImage {
            grid,
            support_radius: r,
            empty: votes == 0,
        })
    }

    pub fn compute_all(&self) -> Vec<SpinImage> {
        (0..self.cloud.len())
            .into_par_iter()
            .map(|i| self.compute(i).expect("index in range"))
            .collect()
    }
}

/// Spin image of one point. For many points of the same cloud prefer
/// [`SpinImageGenerator`].
pub fn spin_image_at(
    cloud: &PointCloud,
    index: usize,
    axis_mode: AxisMode,
    support_radius: f64,
) -> Result<SpinImage> {
    SpinImageGenerator::new(cloud, axis_mode, support_radius)?.compute(index)
}

fn bilinear_vote(grid: &mut [f64], alpha: f64, beta: f64, r: f64) {
    let a = (alpha / r * (SPIN_COLS - 1) as f64).clamp(0.0, (SPIN_COLS - 1) as f64);
    let b = ((beta + r) / (2.0 * r) * (SPIN_ROWS - 1) as f64).clamp(0.0, (SPIN_ROWS - 1) as f64);
    let (c0, r0) = (a.floor() as usize, b.floor() as usize);
    let (fa, fb) = (a - c0 as f64, b - r0 as f64);
    let c1 = (c0 + 1).min(SPIN_COLS - 1);
    let r1 = (r0 + 1).min(SPIN_ROWS - 1);
    grid[r0 * SPIN_COLS + c0] += (1.0 - fa) * (1.0 - fb);
    grid[r0 * SPIN_COLS + c1] += fa * (1.0 - fb);
    grid[r1 * SPIN_COLS + c0] += (1.0 - fa) * fb;
    grid[r1 * SPIN_COLS + c1] += fa * fb;
}

/// PCA normals over the nearest neighbors, oriented to the upper hemisphere.
/// Points with fewer than three neighbors get the vertical axis.
pub fn estimate_normals(tree: &KdTree<'_>) -> Vec<Vector3<f64>> {
    let pts = tree.points();
    pts.par_iter()
        .map(|p| {
            let nn = tree.knn(p, NORMAL_NEIGHBORS);
            if nn.len() < 3 {
                return Vector3::z();
            }
            let mean = nn.iter().fold(Vector3::zeros(), |a, (i, _)| a + pts[*i].coords) / nn.len() as f64;
            let cov = nn.iter().fold(Matrix3::zeros(), |a, (i, _)| {
                let d = pts[*i].coords - mean;
                a + d * d.transpose()
            });
            let eig = SymmetricEigen::new(cov);
            let k = eig.eigenvalues.imin();
            let mut n: Vector3<f64> = eig.eigenvectors.column(k).into();
            if n.norm() == 0.0 {
                return Vector3::z();
            }
            n.normalize_mut();
            if n.z < 0.0 || (n.z == 0.0 && (n.y < 0.0 || (n.y == 0.0 && n.x < 0.0))) {
                n = -n;
            }
            n
        })
        .collect()
}
