//! Octree over a point cloud where every node carries a small set of
//! weighted representative points (a down-sampled copy of its contents).

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OctreeConfig {
    pub max_depth: usize,
    pub leaf_capacity: usize,
    pub reps_per_node: usize,
}

impl Default for OctreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 6,
            leaf_capacity: 32,
            reps_per_node: 8,
        }
    }
}

impl OctreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.leaf_capacity == 0 || self.reps_per_node == 0 {
            return Err(Error::InvalidConfig(format!(
                "octree parameters must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

/// A cluster of source points summarized by its mean, size and spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepPoint {
    pub position: Point,
    pub weight: usize,
    /// Mean squared distance of the members to `position` (m²).
    pub scatter: f64,
    /// Per-axis variance of the members; the components sum to `scatter`.
    pub axis_variance: Vector3<f64>,
}

impl RepPoint {
    /// A representative whose spread is the same along every axis, with
    /// `per_axis` as the variance of each coordinate.
    pub fn isotropic(position: Point, weight: usize, per_axis: f64) -> Self {
        Self {
            position,
            weight,
            scatter: 3.0 * per_axis,
            axis_variance: Vector3::repeat(per_axis),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OctreeNode {
    pub bounds: Aabb,
    pub depth: usize,
    pub children: Vec<OctreeNode>,
    /// Indices into the source cloud; populated on leaves only.
    pub point_indices: Vec<usize>,
    pub reps: Vec<RepPoint>,
    pub count: usize,
}

impl OctreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Nodes at exactly `depth`, plus leaves shallower than it standing in
    /// for their missing descendants. Depth-first, octant order.
    pub fn nodes_at_level(&self, depth: usize) -> Vec<&OctreeNode> {
        let mut out = Vec::new();
        self.collect_level(depth, &mut out);
        out
    }

    fn collect_level<'a>(&'a self, depth: usize, out: &mut Vec<&'a OctreeNode>) {
        if self.depth == depth || self.is_leaf() {
            out.push(self);
        } else {
            for c in &self.children {
                c.collect_level(depth, out);
            }
        }
    }

    pub fn leaves(&self) -> Vec<&OctreeNode> {
        self.nodes_at_level(usize::MAX)
    }

    pub fn visit(&self, f: &mut impl FnMut(&OctreeNode)) {
        f(self);
        for c in &self.children {
            c.visit(f);
        }
    }

    pub fn max_depth(&self) -> usize {
        self.children
            .iter()
            .map(OctreeNode::max_depth)
            .max()
            .unwrap_or(self.depth)
    }
}

/// An octree together with the tight bounds of the cloud it was built from.
#[derive(Debug, Clone)]
pub struct Octree {
    pub root: OctreeNode,
    pub cloud_bounds: Aabb,
    pub config: OctreeConfig,
}

impl Octree {
    pub fn build(cloud: &PointCloud, cfg: OctreeConfig) -> Result<Self> {
        Ok(Self {
            root: build_octree(cloud, cfg)?,
            cloud_bounds: cloud.bounds(),
            config: cfg,
        })
    }

    /// Union of the representative points of every node at `level`.
    pub fn reps_at_level(&self, level: usize) -> Vec<RepPoint> {
        self.root
            .nodes_at_level(level)
            .into_iter()
            .flat_map(|n| n.reps.iter().copied())
            .collect()
    }
}

/// Builds the octree. The root cell is the cloud's bounding box grown to a
/// cube; a node splits into its occupied octants while it holds more than
/// `leaf_capacity` points and is shallower than `max_depth`. Each node's
/// representatives come from a sub-voxel grid over the bounding box of the
/// points it holds, so thin structures still split into several reps.
pub fn build_octree(cloud: &PointCloud, cfg: OctreeConfig) -> Result<OctreeNode> {
    cfg.validate()?;
    let bounds = cloud.bounds().to_cube();
    let indices: Vec<usize> = (0..cloud.len()).collect();
    Ok(build_node(cloud.points(), indices, bounds, 0, &cfg))
}

fn build_node(
    points: &[Point],
    indices: Vec<usize>,
    bounds: Aabb,
    depth: usize,
    cfg: &OctreeConfig,
) -> OctreeNode {
    let members: Vec<Point> = indices.iter().map(|&i| points[i]).collect();
    let occupied = Aabb::from_points(&members).unwrap_or(bounds);
    let reps = compute_reps(points, &indices, &occupied, cfg.reps_per_node);
    let count = indices.len();
    if count <= cfg.leaf_capacity || depth >= cfg.max_depth {
        return OctreeNode {
            bounds,
            depth,
            children: Vec::new(),
            point_indices: indices,
            reps,
            count,
        };
    }

    let center = bounds.center();
    let mut buckets: [Vec<usize>; 8] = Default::default();
    for i in indices {
        buckets[octant_of(&points[i], &center)].push(i);
    }
    let children = buckets
        .into_iter()
        .enumerate()
        .filter(|(_, b)| !b.is_empty())
        .map(|(oct, b)| build_node(points, b, octant_bounds(&bounds, oct), depth + 1, cfg))
        .collect();
    OctreeNode {
        bounds,
        depth,
        children,
        point_indices: Vec::new(),
        reps,
        count,
    }
}

/// Points on a splitting plane go to the upper octant.
fn octant_of(p: &Point, center: &Point) -> usize {
    usize::from(p.x >= center.x) | usize::from(p.y >= center.y) << 1 | usize::from(p.z >= center.z) << 2
}

fn octant_bounds(b: &Aabb, octant: usize) -> Aabb {
    let c = b.center();
    let pick = |bit: usize, axis: usize| {
        if octant >> bit & 1 == 1 {
            (c[axis], b.max[axis])
        } else {
            (b.min[axis], c[axis])
        }
    };
    let (x0, x1) = pick(0, 0);
    let (y0, y1) = pick(1, 1);
    let (z0, z1) = pick(2, 2);
    Aabb::new(Point::new(x0, y0, z0), Point::new(x1, y1, z1))
}

/// Number of sub-voxels per axis used to down-sample a node into at most
/// `m` representatives.
pub fn grid_resolution(m: usize) -> usize {
    let mut g = 1;
    while g * g * g < m {
        g += 1;
    }
    g
}

/// Partitions `indices` by a regular `g x g x g` sub-voxel grid over
/// `bounds` (`g = ceil(cbrt(m))`) and summarizes each occupied cell as a
/// [`RepPoint`]. Cells are emitted in grid order.
pub fn compute_reps(points: &[Point], indices: &[usize], bounds: &Aabb, m: usize) -> Vec<RepPoint> {
    let g = grid_resolution(m.max(1));
    let cells = rep_cell_assignment(points, indices, bounds, g);

    let mut sums = vec![(Vector3::<f64>::zeros(), 0usize); g * g * g];
    for (&i, &cell) in indices.iter().zip(&cells) {
        sums[cell].0 += points[i].coords;
        sums[cell].1 += 1;
    }
    let means: Vec<Option<Point>> = sums
        .iter()
        .map(|(s, n)| (*n > 0).then(|| Point::from(s / *n as f64)))
        .collect();
    let mut sq = vec![Vector3::<f64>::zeros(); g * g * g];
    for (&i, &cell) in indices.iter().zip(&cells) {
        let mean = means[cell].expect("occupied cell");
        sq[cell] += (points[i] - mean).component_mul(&(points[i] - mean));
    }
    means
        .iter()
        .zip(sums.iter().zip(&sq))
        .filter_map(|(mean, ((_, n), s))| {
            mean.map(|position| {
                let axis_variance = s / *n as f64;
                RepPoint {
                    position,
                    weight: *n,
                    scatter: axis_variance.sum(),
                    axis_variance,
                }
            })
        })
        .collect()
}

/// Sub-voxel cell of each point in `indices`, row-major `(x, y, z)` with x
/// fastest.
pub(crate) fn rep_cell_assignment(points: &[Point], indices: &[usize], bounds: &Aabb, g: usize) -> Vec<usize> {
    let extent = bounds.extent();
    let cell_axis = |v: f64, axis: usize| -> usize {
        if extent[axis] <= 0.0 {
            return 0;
        }
        let t = ((v - bounds.min[axis]) / extent[axis] * g as f64).floor();
        (t.max(0.0) as usize).min(g - 1)
    };
    indices
        .iter()
        .map(|&i| {
            let p = &points[i];
            cell_axis(p.x, 0) + g * (cell_axis(p.y, 1) + g * cell_axis(p.z, 2))
        })
        .collect()
}
