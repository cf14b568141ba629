use nalgebra::Vector2;
use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::{Point, PointCloud};
use crate::histogram::{emd_1d, Histogram1D};
use crate::shape_dist::{exact_sd, FeatureKind, SDConfig};

pub const SHAPE_BINS: usize = 64;
/// Smallest upper bound used for a feature range, so that degenerate groups
/// (single points, flat objects) still get a valid histogram.
const MIN_RANGE: f64 = 1e-6;

/// Per-feature upper bounds shared by every object of a group. All ranges
/// start at zero. Every bound is invariant under 4-DOF motion of the
/// objects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeRanges {
    /// Largest vertical extent.
    pub height: f64,
    /// Largest horizontal distance from an object's vertical centroid axis.
    pub radius: f64,
    /// Bound on the largest pairwise distance: `hypot(2 * radius, height)`.
    pub diameter: f64,
}

struct CloudExtents {
    height: f64,
    radius: f64,
}

fn extents(cloud: &PointCloud) -> CloudExtents {
    let b = cloud.bounds();
    let c = cloud.centroid();
    let radius = cloud
        .points()
        .iter()
        .map(|p| (p.x - c.x).hypot(p.y - c.y))
        .fold(0.0, f64::max);
    CloudExtents {
        height: b.max.z - b.min.z,
        radius,
    }
}

impl ShapeRanges {
    pub fn from_clouds<'a>(clouds: impl IntoIterator<Item = &'a PointCloud>) -> Self {
        let (mut height, mut radius): (f64, f64) = (0.0, 0.0);
        for c in clouds {
            let e = extents(c);
            height = height.max(e.height);
            radius = radius.max(e.radius);
        }
        let height = height.max(MIN_RANGE);
        let radius = radius.max(MIN_RANGE);
        Self {
            height,
            radius,
            diameter: (2.0 * radius).hypot(height),
        }
    }
}

/// The five per-object histograms used for object similarity:
///
/// 0. height above the object's lowest point, over `[0, height]`;
/// 1. horizontal distance from the vertical centroid axis, over `[0, radius]`;
/// 2. D2 point-pair distances, over `[0, diameter]`;
/// 3. thickness profile: the object is cut into 64 horizontal slabs of
///    height `ranges.height / 64`; each point votes the RMS horizontal spread
///    of its slab, over `[0, radius]`;
/// 4. distance to the best-fit vertical plane through the centroid, over
///    `[0, radius]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeFeatureSet {
    pub features: [Histogram1D; 5],
}

pub fn shape_features(cloud: &PointCloud, ranges: &ShapeRanges, cfg: &SDConfig) -> Result<ShapeFeatureSet> {
    let pts = cloud.points();
    let zmin = cloud.bounds().min.z;
    let c = cloud.centroid();

    let mut height = Histogram1D::new(0.0, ranges.height, SHAPE_BINS)?;
    let mut radial = Histogram1D::new(0.0, ranges.radius, SHAPE_BINS)?;
    for p in pts {
        height.vote(p.z - zmin, 1.0);
        radial.vote((p.x - c.x).hypot(p.y - c.y), 1.0);
    }

    let d2 = if pts.len() >= 2 {
        let d2_cfg = SDConfig {
            bins: SHAPE_BINS,
            ..cfg.with_fixed_range(0.0, ranges.diameter)
        };
        exact_sd(cloud, FeatureKind::D2, &d2_cfg)?.histogram
    } else {
        let mut h = Histogram1D::new(0.0, ranges.diameter, SHAPE_BINS)?;
        h.vote(0.0, 1.0);
        h
    };

    Ok(ShapeFeatureSet {
        features: [
            height.normalized(),
            radial.normalized(),
            d2,
            thickness_profile(pts, zmin, ranges)?,
            plane_distances(pts, &c, ranges)?,
        ],
    })
}

fn thickness_profile(pts: &[Point], zmin: f64, ranges: &ShapeRanges) -> Result<Histogram1D> {
    let slab_h = ranges.height / SHAPE_BINS as f64;
    let slab_of = |p: &Point| (((p.z - zmin) / slab_h).floor().max(0.0) as usize).min(SHAPE_BINS - 1);
    let mut sums = vec![(Vector2::<f64>::zeros(), 0usize); SHAPE_BINS];
    for p in pts {
        let s = &mut sums[slab_of(p)];
        s.0 += Vector2::new(p.x, p.y);
        s.1 += 1;
    }
    let centers: Vec<Vector2<f64>> = sums
        .iter()
        .map(|(s, n)| if *n > 0 { s / *n as f64 } else { Vector2::zeros() })
        .collect();
    let mut spread = vec![0.0; SHAPE_BINS];
    for p in pts {
        let k = slab_of(p);
        spread[k] += (Vector2::new(p.x, p.y) - centers[k]).norm_squared();
    }
    let mut h = Histogram1D::new(0.0, ranges.radius, SHAPE_BINS)?;
    for ((_, n), s) in sums.iter().zip(&spread) {
        if *n > 0 {
            h.vote((s / *n as f64).sqrt(), *n as f64);
        }
    }
    Ok(h.normalized())
}

fn plane_distances(pts: &[Point], c: &Point, ranges: &ShapeRanges) -> Result<Histogram1D> {
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p.x - c.x, p.y - c.y);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    // major axis angle of the horizontal covariance; the plane normal is the
    // minor axis
    let phi = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let normal = Vector2::new(-phi.sin(), phi.cos());
    let mut h = Histogram1D::new(0.0, ranges.radius, SHAPE_BINS)?;
    for p in pts {
        h.vote((Vector2::new(p.x - c.x, p.y - c.y).dot(&normal)).abs(), 1.0);
    }
    Ok(h.normalized())
}

/// Mean of the five per-feature Earth Mover's Distances.
pub fn object_distance(a: &ShapeFeatureSet, b: &ShapeFeatureSet) -> Result<f64> {
    let mut sum = 0.0;
    for (x, y) in a.features.iter().zip(&b.features) {
        sum += emd_1d(x, y)?;
    }
    Ok(sum / a.features.len() as f64)
}

/// Symmetric matrix of pairwise object distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Result<f64>) -> Result<Self> {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j)?;
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Ok(Self { n, values })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Square CSV without a header, one row per object.
    pub fn to_csv(&self) -> String {
        matrix_csv(self.n, &self.values)
    }
}

fn matrix_csv(n: usize, values: &[f64]) -> String {
    let mut out = String::new();
    for i in 0..n {
        let row: Vec<String> = values[i * n..(i + 1) * n].iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn similarity_from_features(features: &[ShapeFeatureSet]) -> Result<SimilarityMatrix> {
    SimilarityMatrix::from_fn(features.len(), |i, j| object_distance(&features[i], &features[j]))
}

/// Ranges are fixed from the whole group before any feature is computed.
pub fn group_features(objects: &[PointCloud], cfg: &SDConfig) -> Result<Vec<ShapeFeatureSet>> {
    let ranges = ShapeRanges::from_clouds(objects);
    objects
        .par_iter()
        .map(|c| shape_features(c, &ranges, cfg))
        .collect()
}

pub fn similarity_matrix(objects: &[PointCloud], cfg: &SDConfig) -> Result<SimilarityMatrix> {
    similarity_from_features(&group_features(objects, cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Transform4Dof;
    use crate::synth::{random_transform, synth_object, ObjectParams, ShapeClass};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn object(class: ShapeClass, seed: u64) -> PointCloud {
        synth_object(class, &ObjectParams::default(), seed)
    }

    #[test]
    fn uniform_box_height_histogram() {
        // points filling a unit-height box uniformly in z
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Point> = (0..64_000)
            .map(|_| Point::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
            .collect();
        let c = PointCloud::new(pts).unwrap();
        let ranges = ShapeRanges::from_clouds([&c]);
        let f = shape_features(&c, &ranges, &SDConfig::default()).unwrap();
        let expected = 1.0 / SHAPE_BINS as f64;
        for m in f.features[0].mass() {
            assert!((m - expected).abs() < 0.25 * expected, "{m}");
        }
    }

    #[test]
    fn features_are_four_dof_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for class in [ShapeClass::Car, ShapeClass::Box, ShapeClass::Pedestrian] {
            let c = object(class, 9);
            let ranges = ShapeRanges::from_clouds([&c]);
            let base = shape_features(&c, &ranges, &SDConfig::default()).unwrap();
            for _ in 0..5 {
                let t = random_transform(&mut rng, 50.0, std::f64::consts::PI);
                let moved = c.transformed(&t);
                assert!((ShapeRanges::from_clouds([&moved]).height - ranges.height).abs() < 1e-12);
                let f = shape_features(&moved, &ranges, &SDConfig::default()).unwrap();
                for (a, b) in base.features.iter().zip(&f.features) {
                    for (x, y) in a.mass().iter().zip(b.mass()) {
                        assert!((x - y).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn single_point_features() {
        let c = PointCloud::new(vec![Point::new(1.0, 2.0, 3.0)]).unwrap();
        let ranges = ShapeRanges::from_clouds([&c]);
        let f = shape_features(&c, &ranges, &SDConfig::default()).unwrap();
        for h in &f.features {
            assert_eq!(h.mass().iter().filter(|m| **m > 0.0).count(), 1);
            assert!((h.total() - 1.0).abs() < 1e-12);
        }
        assert_eq!(f.features[2].mass()[0], 1.0);
    }

    #[test]
    fn object_distance_is_mean_of_emds() {
        let a = object(ShapeClass::Car, 1);
        let b = object(ShapeClass::Pole, 2);
        let ranges = ShapeRanges::from_clouds([&a, &b]);
        let fa = shape_features(&a, &ranges, &SDConfig::default()).unwrap();
        let fb = shape_features(&b, &ranges, &SDConfig::default()).unwrap();
        // independent EMD: sum of |CDF differences| over bins times bin width
        let mut expected = 0.0;
        for (x, y) in fa.features.iter().zip(&fb.features) {
            let (mut ca, mut cb, mut acc) = (0.0, 0.0, 0.0);
            for k in 0..x.bins() {
                ca += x.mass()[k];
                cb += y.mass()[k];
                acc += (ca - cb).abs();
            }
            expected += acc * (x.hi() - x.lo()) / x.bins() as f64;
        }
        expected /= 5.0;
        let d = object_distance(&fa, &fb).unwrap();
        assert!((d - expected).abs() < 1e-12);
        assert!((object_distance(&fb, &fa).unwrap() - d).abs() < 1e-15);
        assert_eq!(object_distance(&fa, &fa).unwrap(), 0.0);
    }

    #[test]
    fn range_mismatch_is_an_error() {
        let a = object(ShapeClass::Car, 1);
        let b = object(ShapeClass::Pole, 2);
        let fa = shape_features(&a, &ShapeRanges::from_clouds([&a]), &SDConfig::default()).unwrap();
        let fb = shape_features(&b, &ShapeRanges::from_clouds([&b]), &SDConfig::default()).unwrap();
        assert!(object_distance(&fa, &fb).is_err());
    }

    #[test]
    fn matrix_is_symmetric_with_zero_diagonal() {
        let objs: Vec<PointCloud> = (0..10).map(|i| object(ShapeClass::ALL[i % 6], i as u64)).collect();
        let m = similarity_matrix(&objs, &SDConfig::default()).unwrap();
        for i in 0..10 {
            assert_eq!(m.get(i, i), 0.0);
            for j in 0..10 {
                assert!((m.get(i, j) - m.get(j, i)).abs() < 1e-12);
                assert!(m.get(i, j) >= 0.0);
            }
        }
    }

    #[test]
    fn duplicates_have_zero_distance() {
        let a = object(ShapeClass::Car, 4);
        let m = similarity_matrix(&[a.clone(), a], &SDConfig::default()).unwrap();
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn clusters_order_within_before_across() {
        let mut objs = Vec::new();
        for i in 0..4 {
            objs.push(object(ShapeClass::Car, 100 + i));
        }
        for i in 0..4 {
            objs.push(object(ShapeClass::Pole, 200 + i));
        }
        let m = similarity_matrix(&objs, &SDConfig::default()).unwrap();
        let same = |i: usize, j: usize| (i < 4) == (j < 4);
        let max_within = (0..8)
            .flat_map(|i| (0..8).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && same(i, j))
            .map(|(i, j)| m.get(i, j))
            .fold(0.0, f64::max);
        let min_across = (0..8)
            .flat_map(|i| (0..8).map(move |j| (i, j)))
            .filter(|&(i, j)| !same(i, j))
            .map(|(i, j)| m.get(i, j))
            .fold(f64::INFINITY, f64::min);
        assert!(max_within < min_across, "{max_within} vs {min_across}");
    }

    #[test]
    fn matrix_invariant_under_independent_motions() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let objs: Vec<PointCloud> = (0..6).map(|i| object(ShapeClass::ALL[i], 30 + i as u64)).collect();
        let moved: Vec<PointCloud> = objs
            .iter()
            .map(|c| c.transformed(&random_transform(&mut rng, 100.0, 3.0)))
            .collect();
        let a = similarity_matrix(&objs, &SDConfig::default()).unwrap();
        let b = similarity_matrix(&moved, &SDConfig::default()).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-6);
        }
        let _ = Transform4Dof::identity();
    }
}
