//! Shape distribution features (D2, A3, T3, R3).
//!
//! Two routes produce the same kind of histogram:
//!
//! * [`exact_sd`] votes the measurement of every point tuple (or a seeded
//!   uniform sample of tuples when the count exceeds the budget).
//! * [`hsd`] works on the representative points of an octree level. Each
//!   tuple of representatives contributes a Gaussian vote whose mean is the
//!   measurement at the representative positions and whose variance comes
//!   from first-order propagation of the representatives' scatter. The vote
//!   weight is the number of point tuples it stands for.

use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud};
use crate::histogram::Histogram1D;
use crate::octree::{Octree, RepPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    /// Distance between two points.
    D2,
    /// Area of a triangle.
    A3,
    /// Volume of a tetrahedron.
    T3,
    /// Inradius of a triangle.
    R3,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 4] = [FeatureKind::D2, FeatureKind::A3, FeatureKind::T3, FeatureKind::R3];

    pub fn arity(self) -> usize {
        match self {
            FeatureKind::D2 => 2,
            FeatureKind::A3 | FeatureKind::R3 => 3,
            FeatureKind::T3 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::D2 => "D2",
            FeatureKind::A3 => "A3",
            FeatureKind::T3 => "T3",
            FeatureKind::R3 => "R3",
        }
    }

    /// Loose analytic upper bound of the measurement for a cloud of the given
    /// diameter.
    pub fn auto_upper_bound(self, diameter: f64) -> f64 {
        let d = if diameter > 0.0 { diameter } else { 1.0 };
        match self {
            FeatureKind::D2 => d,
            FeatureKind::A3 => d * d * 3f64.sqrt() / 4.0,
            FeatureKind::T3 => d * d * d / 8.0,
            FeatureKind::R3 => d / (2.0 * 3f64.sqrt()),
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "D2" => Ok(FeatureKind::D2),
            "A3" => Ok(FeatureKind::A3),
            "T3" => Ok(FeatureKind::T3),
            "R3" => Ok(FeatureKind::R3),
            _ => Err(Error::InvalidConfig(format!("unknown feature kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RangeMode {
    /// `[0, bound(diameter)]` from [`FeatureKind::auto_upper_bound`].
    Auto,
    Fixed(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SDConfig {
    pub bins: usize,
    pub range_mode: RangeMode,
    pub exact_sample_budget: u64,
    pub rng_seed: u64,
}

impl Default for SDConfig {
    fn default() -> Self {
        Self {
            bins: 64,
            range_mode: RangeMode::Auto,
            exact_sample_budget: 200_000,
            rng_seed: 0,
        }
    }
}

impl SDConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::InvalidConfig("shape distribution needs at least 2 bins".into()));
        }
        if self.exact_sample_budget == 0 {
            return Err(Error::InvalidConfig("sample budget must be positive".into()));
        }
        Ok(())
    }

    pub fn with_fixed_range(mut self, lo: f64, hi: f64) -> Self {
        self.range_mode = RangeMode::Fixed(lo, hi);
        self
    }

    fn empty_histogram(&self, kind: FeatureKind, diameter: f64) -> Result<Histogram1D> {
        self.validate()?;
        let (lo, hi) = match self.range_mode {
            RangeMode::Auto => (0.0, kind.auto_upper_bound(diameter)),
            RangeMode::Fixed(lo, hi) => (lo, hi),
        };
        Histogram1D::new(lo, hi, self.bins)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SDFeature {
    pub kind: FeatureKind,
    pub histogram: Histogram1D,
}

/// Expected measurement, its variance and the number of tuples it stands
/// for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianVote {
    pub mu: f64,
    pub sigma2: f64,
    pub weight: f64,
}

fn check_arity(kind: FeatureKind, n: usize) -> Result<()> {
    if n != kind.arity() {
        return Err(Error::WrongArity {
            kind: kind.name(),
            expected: kind.arity(),
            got: n,
        });
    }
    Ok(())
}

pub fn measure(kind: FeatureKind, pts: &[Point]) -> Result<f64> {
    check_arity(kind, pts.len())?;
    Ok(measure_unchecked(kind, pts))
}

#[inline]
fn measure_unchecked(kind: FeatureKind, p: &[Point]) -> f64 {
    match kind {
        FeatureKind::D2 => (p[1] - p[0]).norm(),
        FeatureKind::A3 => triangle_area(&p[0], &p[1], &p[2]),
        FeatureKind::R3 => inradius(&p[0], &p[1], &p[2]),
        FeatureKind::T3 => tetra_volume(&p[0], &p[1], &p[2], &p[3]),
    }
}

#[inline]
fn triangle_area(a: &Point, b: &Point, c: &Point) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

#[inline]
fn inradius(a: &Point, b: &Point, c: &Point) -> f64 {
    let s = 0.5 * ((b - a).norm() + (c - b).norm() + (a - c).norm());
    if s <= 0.0 {
        return 0.0;
    }
    triangle_area(a, b, c) / s
}

#[inline]
fn tetra_volume(a: &Point, b: &Point, c: &Point, d: &Point) -> f64 {
    (b - a).dot(&(c - a).cross(&(d - a))).abs() / 6.0
}

/// Largest pairwise distance among `pts`; the length scale for degeneracy
/// checks and finite-difference steps.
fn tuple_scale(pts: &[Point]) -> f64 {
    let mut s: f64 = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            s = s.max((pts[i] - pts[j]).norm());
        }
    }
    s
}

const DEGENERATE_REL: f64 = 1e-12;

/// Gradient of the measurement with respect to each point's position.
/// Closed form where the measurement is smooth, central differences
/// otherwise.
pub fn measure_gradients(kind: FeatureKind, pts: &[Point]) -> Result<Vec<Vector3<f64>>> {
    check_arity(kind, pts.len())?;
    Ok(analytic_gradients(kind, pts).unwrap_or_else(|| numeric_gradients(kind, pts)))
}

fn analytic_gradients(kind: FeatureKind, p: &[Point]) -> Option<Vec<Vector3<f64>>> {
    let scale = tuple_scale(p);
    if scale <= 0.0 {
        return None;
    }
    match kind {
        FeatureKind::D2 => {
            let d = p[0] - p[1];
            let n = d.norm();
            (n > DEGENERATE_REL * scale).then(|| {
                let u = d / n;
                vec![u, -u]
            })
        }
        FeatureKind::A3 => area_gradients(p, scale),
        FeatureKind::R3 => {
            let area_grad = area_gradients(p, scale)?;
            let area = triangle_area(&p[0], &p[1], &p[2]);
            let s = 0.5 * ((p[1] - p[0]).norm() + (p[2] - p[1]).norm() + (p[0] - p[2]).norm());
            let unit = |a: &Point, b: &Point| {
                let v = a - b;
                let n = v.norm();
                if n > 0.0 { v / n } else { Vector3::zeros() }
            };
            Some(
                (0..3)
                    .map(|i| {
                        let (q, r) = (&p[(i + 1) % 3], &p[(i + 2) % 3]);
                        let ds = 0.5 * (unit(&p[i], q) + unit(&p[i], r));
                        area_grad[i] / s - ds * (area / (s * s))
                    })
                    .collect(),
            )
        }
        FeatureKind::T3 => {
            let (u, v, w) = (p[1] - p[0], p[2] - p[0], p[3] - p[0]);
            let det = u.dot(&v.cross(&w));
            if det.abs() <= DEGENERATE_REL * scale.powi(3) {
                return None;
            }
            let k = det.signum() / 6.0;
            let gb = v.cross(&w) * k;
            let gc = w.cross(&u) * k;
            let gd = u.cross(&v) * k;
            Some(vec![-(gb + gc + gd), gb, gc, gd])
        }
    }
}

fn area_gradients(p: &[Point], scale: f64) -> Option<Vec<Vector3<f64>>> {
    let n = (p[1] - p[0]).cross(&(p[2] - p[0]));
    let len = n.norm();
    if len <= DEGENERATE_REL * scale * scale {
        return None;
    }
    let nh = n / len;
    Some(vec![
        nh.cross(&(p[2] - p[1])) * 0.5,
        nh.cross(&(p[0] - p[2])) * 0.5,
        nh.cross(&(p[1] - p[0])) * 0.5,
    ])
}

fn numeric_gradients(kind: FeatureKind, p: &[Point]) -> Vec<Vector3<f64>> {
    let h = 1e-6 * tuple_scale(p).max(1e-9);
    // measurements are translation invariant; centering keeps the +h and -h
    // perturbations symmetric in floating point
    let c = p.iter().fold(Vector3::zeros(), |a, q| a + q.coords) / p.len() as f64;
    let mut work: Vec<Point> = p.iter().map(|q| Point::from(q.coords - c)).collect();
    (0..p.len())
        .map(|i| {
            let mut g = Vector3::zeros();
            for axis in 0..3 {
                let orig = work[i][axis];
                work[i][axis] = orig + h;
                let fp = measure_unchecked(kind, &work);
                work[i][axis] = orig - h;
                let fm = measure_unchecked(kind, &work);
                work[i][axis] = orig;
                g[axis] = (fp - fm) / (2.0 * h);
            }
            g
        })
        .collect()
}

/// Gaussian vote for one tuple of representatives: mean is the measurement
/// at the representative positions, variance is the first-order propagation
/// `sum_i sum_axis var_i[axis] * grad_i[axis]^2` of each representative's
/// per-axis variance (`scatter * |grad_i|^2` for an isotropic representative
/// with per-coordinate variance `scatter`), and weight is the product of
/// representative weights.
pub fn moment_vote(kind: FeatureKind, reps: &[RepPoint]) -> Result<GaussianVote> {
    check_arity(kind, reps.len())?;
    let mut pos = [Point::origin(); 4];
    for (slot, r) in pos.iter_mut().zip(reps) {
        *slot = r.position;
    }
    let pos = &pos[..reps.len()];
    let mu = measure_unchecked(kind, pos);
    let sigma2 = if reps.iter().all(|r| r.axis_variance == Vector3::zeros()) {
        0.0
    } else {
        let grads = analytic_gradients(kind, pos).unwrap_or_else(|| numeric_gradients(kind, pos));
        reps.iter()
            .zip(&grads)
            .map(|(r, g)| r.axis_variance.dot(&g.component_mul(g)))
            .sum()
    };
    let weight = reps.iter().map(|r| r.weight as f64).product();
    Ok(GaussianVote { mu, sigma2, weight })
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Spreads `v.weight` over the bins by the Gaussian's mass in each bin.
/// Tail mass beyond the histogram range lands in the boundary bins, so the
/// histogram total grows by exactly `v.weight` (up to rounding).
pub fn vote_gaussian(h: &mut Histogram1D, v: &GaussianVote) {
    if v.sigma2 <= 0.0 {
        h.vote(v.mu, v.weight);
        return;
    }
    let sigma = v.sigma2.sqrt();
    let first = h.bin_of(v.mu - 8.0 * sigma);
    let last = h.bin_of(v.mu + 8.0 * sigma);
    if first == last {
        h.add_to_bin(first, v.weight);
        return;
    }
    let mut lower_cdf = 0.0;
    for k in first..=last {
        let upper_cdf = if k == last {
            1.0
        } else {
            std_normal_cdf((h.bin_edges(k).1 - v.mu) / sigma)
        };
        let m = upper_cdf - lower_cdf;
        if m > 0.0 {
            h.add_to_bin(k, v.weight * m);
        }
        lower_cdf = upper_cdf;
    }
}

/// Like [`vote_gaussian`] but for a non-negative measurement: spreads the
/// distribution of `|X|` with `X ~ N(mu, sigma2)`, so mass the Gaussian puts
/// below zero is reflected instead of piling up in the first bin.
pub fn vote_folded_gaussian(h: &mut Histogram1D, v: &GaussianVote) {
    if v.sigma2 <= 0.0 {
        h.vote(v.mu, v.weight);
        return;
    }
    let sigma = v.sigma2.sqrt();
    let cdf = |x: f64| std_normal_cdf((x - v.mu) / sigma) - std_normal_cdf((-x - v.mu) / sigma);
    let first = h.bin_of((v.mu - 8.0 * sigma).max(0.0));
    let last = h.bin_of(v.mu + 8.0 * sigma);
    if first == last {
        h.add_to_bin(first, v.weight);
        return;
    }
    let mut lower = 0.0;
    for k in first..=last {
        let upper = if k == last { 1.0 } else { cdf(h.bin_edges(k).1) };
        let m = upper - lower;
        if m > 0.0 {
            h.add_to_bin(k, v.weight * m);
        }
        lower = upper;
    }
}

/// `n choose k`, saturating.
pub fn combinations(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    c
}

/// Calls `f` with every strictly increasing `k`-tuple of indices below `n`
/// (1 <= k <= 4), in lexicographic order.
fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    match k {
        1 => (0..n).for_each(|i| f(&[i])),
        2 => {
            for i in 0..n {
                for j in i + 1..n {
                    f(&[i, j]);
                }
            }
        }
        3 => {
            for i in 0..n {
                for j in i + 1..n {
                    for l in j + 1..n {
                        f(&[i, j, l]);
                    }
                }
            }
        }
        4 => {
            for i in 0..n {
                for j in i + 1..n {
                    for l in j + 1..n {
                        for m in l + 1..n {
                            f(&[i, j, l, m]);
                        }
                    }
                }
            }
        }
        _ => unreachable!("tuple arity is 2..=4"),
    }
}

/// Draws `k` distinct indices by repeated draws from `next`, rejecting
/// tuples with repeats.
fn draw_distinct(k: usize, buf: &mut [usize; 4], mut next: impl FnMut() -> usize) {
    'retry: loop {
        for i in 0..k {
            buf[i] = next();
            if buf[..i].contains(&buf[i]) {
                continue 'retry;
            }
        }
        return;
    }
}

/// Shape distribution of the cloud from point tuples: all of them when their
/// count is within the budget, otherwise `budget` uniformly sampled distinct
/// tuples (seeded).
pub fn exact_sd(cloud: &PointCloud, kind: FeatureKind, cfg: &SDConfig) -> Result<SDFeature> {
    let pts = cloud.points();
    let k = kind.arity();
    if pts.len() < k {
        return Err(Error::TooFewPoints {
            needed: k,
            got: pts.len(),
        });
    }
    let mut h = cfg.empty_histogram(kind, cloud.diameter())?;
    if combinations(pts.len(), k) <= cfg.exact_sample_budget as u128 {
        enumerate_exact(pts, kind, &mut h);
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let mut idx = [0usize; 4];
        let mut tuple = [Point::origin(); 4];
        for _ in 0..cfg.exact_sample_budget {
            draw_distinct(k, &mut idx, || rng.random_range(0..pts.len()));
            for (slot, &i) in tuple.iter_mut().zip(&idx[..k]) {
                *slot = pts[i];
            }
            h.vote(measure_unchecked(kind, &tuple[..k]), 1.0);
        }
    }
    h.normalize();
    Ok(SDFeature { kind, histogram: h })
}

fn enumerate_exact(pts: &[Point], kind: FeatureKind, h: &mut Histogram1D) {
    let n = pts.len();
    let mut counts = vec![0u64; h.bins()];
    match kind {
        FeatureKind::T3 => {
            // hoisted inner loop: the 4-tuple count dominates everything else
            let (lo, last, w) = (h.lo(), h.bins() - 1, h.bin_width());
            let bin = |det: f64| {
                let t = (det.abs() / 6.0 - lo) / w;
                if t <= 0.0 {
                    0
                } else if t >= last as f64 {
                    last
                } else {
                    t as usize
                }
            };
            let xyz: Vec<[f64; 3]> = pts.iter().map(|p| [p.x, p.y, p.z]).collect();
            for i in 0..n {
                for j in i + 1..n {
                    let u = pts[j] - pts[i];
                    for l in j + 1..n {
                        let uv = u.cross(&(pts[l] - pts[i]));
                        let (a, b, c) = (uv.x, uv.y, uv.z);
                        let off = a * xyz[i][0] + b * xyz[i][1] + c * xyz[i][2];
                        for q in &xyz[l + 1..] {
                            counts[bin(a * q[0] + b * q[1] + c * q[2] - off)] += 1;
                        }
                    }
                }
            }
        }
        _ => {
            let mut tuple = [Point::origin(); 4];
            let k = kind.arity();
            for_each_combination(n, k, |idx| {
                for (slot, &i) in tuple.iter_mut().zip(idx) {
                    *slot = pts[i];
                }
                counts[h.bin_of(measure_unchecked(kind, &tuple[..k]))] += 1;
            });
        }
    }
    for (b, c) in counts.into_iter().enumerate() {
        if c > 0 {
            h.add_to_bin(b, c as f64);
        }
    }
}

/// Hierarchical shape distribution from the representatives of every octree
/// node at `level` (root is level 0; shallower leaves stand in for missing
/// descendants).
///
/// Every tuple of distinct representatives casts a [`moment_vote`], spread
/// with [`vote_folded_gaussian`]. When the tuple count exceeds the budget,
/// `budget` tuples are sampled with probability proportional to the product
/// of their weights and each casts a unit-weight vote instead.
pub fn hsd(tree: &Octree, kind: FeatureKind, level: usize, cfg: &SDConfig) -> Result<SDFeature> {
    if level == 0 {
        return Err(Error::InvalidConfig("hsd level must be at least 1".into()));
    }
    let reps = tree.reps_at_level(level);
    hsd_from_reps(&reps, kind, tree.cloud_bounds.diagonal(), cfg)
}

/// [`hsd`] over an explicit representative set; `diameter` only feeds the
/// automatic histogram range.
pub fn hsd_from_reps(reps: &[RepPoint], kind: FeatureKind, diameter: f64, cfg: &SDConfig) -> Result<SDFeature> {
    let k = kind.arity();
    if reps.len() < k {
        return Err(Error::TooFewReps {
            needed: k,
            got: reps.len(),
        });
    }
    let mut h = cfg.empty_histogram(kind, diameter)?;
    let mut tuple = [reps[0]; 4];
    if combinations(reps.len(), k) <= cfg.exact_sample_budget as u128 {
        for_each_combination(reps.len(), k, |idx| {
            for (slot, &i) in tuple.iter_mut().zip(idx) {
                *slot = reps[i];
            }
            let v = moment_vote(kind, &tuple[..k]).expect("arity checked");
            vote_folded_gaussian(&mut h, &v);
        });
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let dist = WeightedIndex::new(reps.iter().map(|r| r.weight as f64))
            .map_err(|e| Error::InvalidConfig(format!("representative weights: {e}")))?;
        let mut idx = [0usize; 4];
        for _ in 0..cfg.exact_sample_budget {
            draw_distinct(k, &mut idx, || dist.sample(&mut rng));
            for (slot, &i) in tuple.iter_mut().zip(&idx[..k]) {
                *slot = reps[i];
            }
            let v = moment_vote(kind, &tuple[..k]).expect("arity checked");
            vote_folded_gaussian(
                &mut h,
                &GaussianVote {
                    weight: 1.0,
                    ..v
                },
            );
        }
    }
    h.normalize();
    Ok(SDFeature { kind, histogram: h })
}

/// CSV rows `kind,bin_index,bin_lo,bin_hi,mass` for each feature, with a
/// header line.
pub fn features_to_csv(features: &[SDFeature]) -> String {
    let mut out = String::from("kind,bin_index,bin_lo,bin_hi,mass\n");
    for f in features {
        for (k, m) in f.histogram.mass().iter().enumerate() {
            let (lo, hi) = f.histogram.bin_edges(k);
            out.push_str(&format!("{},{},{},{},{}\n", f.kind, k, lo, hi, m));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Transform4Dof;
    use crate::histogram::l1_distance;
    use crate::octree::OctreeConfig;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::Normal;

    fn p(x: f64, y: f64, z: f64) -> Point {
        Point::new(x, y, z)
    }

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| p(rng.random_range(0.0..2.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.5)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn analytic_measurements() {
        assert_eq!(measure(FeatureKind::D2, &[p(0., 0., 0.), p(3., 4., 0.)]).unwrap(), 5.0);
        let s = 2.0;
        let tri = [p(0., 0., 0.), p(s, 0., 0.), p(s / 2.0, s * 3f64.sqrt() / 2.0, 0.)];
        let r = measure(FeatureKind::R3, &tri).unwrap();
        assert!((r - 1.0 / 3f64.sqrt()).abs() < 1e-9);
        assert!((r - 0.57735).abs() < 1e-5);
        let coplanar = [p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.), p(1., 1., 0.)];
        assert_eq!(measure(FeatureKind::T3, &coplanar).unwrap(), 0.0);
        let corner = [p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.), p(0., 0., 1.)];
        assert!((measure(FeatureKind::T3, &corner).unwrap() - 1.0 / 6.0).abs() < 1e-12);
        let collinear = [p(0., 0., 0.), p(1., 0., 0.), p(2., 0., 0.)];
        assert_eq!(measure(FeatureKind::R3, &collinear).unwrap(), 0.0);
        assert_eq!(measure(FeatureKind::R3, &[p(1., 1., 1.); 3]).unwrap(), 0.0);
    }

    #[test]
    fn wrong_arity_is_rejected() {
        assert!(matches!(
            measure(FeatureKind::T3, &[p(0., 0., 0.); 3]),
            Err(Error::WrongArity { expected: 4, got: 3, .. })
        ));
        assert!(measure(FeatureKind::D2, &[p(0., 0., 0.)]).is_err());
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in FeatureKind::ALL {
            for _ in 0..50 {
                let pts: Vec<Point> = (0..kind.arity())
                    .map(|_| p(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect();
                let a = analytic_gradients(kind, &pts).expect("generic configuration");
                let n = numeric_gradients(kind, &pts);
                for (ga, gn) in a.iter().zip(&n) {
                    assert!((ga - gn).norm() < 1e-6, "{kind}: {ga:?} vs {gn:?}");
                }
            }
        }
    }

    #[test]
    fn degenerate_configurations_fall_back() {
        let g = measure_gradients(FeatureKind::T3, &[p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.), p(1., 1., 0.)])
            .unwrap();
        assert_eq!(g.len(), 4);
        assert!(g.iter().all(|v| v.iter().all(|c| c.is_finite())));
        let g = measure_gradients(FeatureKind::D2, &[p(1., 1., 1.), p(1., 1., 1.)]).unwrap();
        assert!(g.iter().all(|v| v.norm() < 1e-6));
    }

    fn rep(x: f64, y: f64, z: f64, weight: usize, scatter: f64) -> RepPoint {
        RepPoint::isotropic(p(x, y, z), weight, scatter)
    }

    #[test]
    fn moment_vote_zero_scatter() {
        let v = moment_vote(FeatureKind::D2, &[rep(0., 0., 0., 1, 0.0), rep(3., 4., 0., 1, 0.0)]).unwrap();
        assert_eq!(v, GaussianVote { mu: 5.0, sigma2: 0.0, weight: 1.0 });
    }

    #[test]
    fn moment_vote_d2_adds_scatters() {
        let v = moment_vote(FeatureKind::D2, &[rep(0., 0., 0., 3, 0.02), rep(1., 2., 2., 4, 0.05)]).unwrap();
        assert!((v.mu - 3.0).abs() < 1e-15);
        assert!((v.sigma2 - 0.07).abs() < 1e-12);
        assert_eq!(v.weight, 12.0);
    }

    #[test]
    fn moment_vote_a3_against_monte_carlo() {
        // scatter is treated as per-coordinate variance of the isotropic spread
        let d = 2.0;
        let centers = [p(0., 0., 0.), p(d, 0., 0.), p(0.3, 1.7, 0.4)];
        let scatter = (0.1 * d).powi(2);
        let reps: Vec<RepPoint> = centers.iter().map(|c| RepPoint::isotropic(*c, 1, scatter)).collect();
        let v = moment_vote(FeatureKind::A3, &reps).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let noise = Normal::new(0.0, scatter.sqrt()).unwrap();
        let n = 100_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let jitter = |c: &Point, rng: &mut ChaCha8Rng| {
                    p(c.x + noise.sample(rng), c.y + noise.sample(rng), c.z + noise.sample(rng))
                };
                let t = [jitter(&centers[0], &mut rng), jitter(&centers[1], &mut rng), jitter(&centers[2], &mut rng)];
                triangle_area(&t[0], &t[1], &t[2])
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((v.mu - mean).abs() / mean < 0.03, "mu {} vs {}", v.mu, mean);
        assert!((v.sigma2 - var).abs() / var < 0.25, "sigma2 {} vs {}", v.sigma2, var);
    }

    #[test]
    fn point_vote_lands_in_bin() {
        let mut h = Histogram1D::new(0.0, 10.0, 10).unwrap();
        vote_gaussian(&mut h, &GaussianVote { mu: 3.5, sigma2: 0.0, weight: 2.0 });
        assert_eq!(h.mass()[3], 2.0);
        assert_eq!(h.total(), 2.0);
    }

    #[test]
    fn narrow_gaussian_stays_within_three_sigma() {
        let mut h = Histogram1D::new(0.0, 100.0, 100).unwrap();
        let sigma = 1.0;
        vote_gaussian(&mut h, &GaussianVote { mu: 50.0, sigma2: sigma * sigma, weight: 1.0 });
        let inside: f64 = h.mass()[47..53].iter().sum();
        assert!(inside >= 0.997, "{inside}");
    }

    #[test]
    fn tails_clamp_into_boundary_bins() {
        let mut h = Histogram1D::new(0.0, 1.0, 4).unwrap();
        vote_gaussian(&mut h, &GaussianVote { mu: 0.0, sigma2: 0.01, weight: 1.0 });
        assert!(h.mass()[0] > 0.5);
        assert!((h.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn folded_vote_reflects_negative_mass() {
        // |N(0, 1)| has half its mass in [0, 0.6745)
        let mut h = Histogram1D::new(0.0, 0.6744897501960817 * 2.0, 2).unwrap();
        vote_folded_gaussian(&mut h, &GaussianVote { mu: 0.0, sigma2: 1.0, weight: 1.0 });
        assert!((h.mass()[0] - 0.5).abs() < 1e-9, "{:?}", h.mass());
        // far from zero the reflection is negligible
        let mut a = Histogram1D::new(0.0, 100.0, 100).unwrap();
        let mut b = a.clone();
        let v = GaussianVote { mu: 50.0, sigma2: 4.0, weight: 3.0 };
        vote_gaussian(&mut a, &v);
        vote_folded_gaussian(&mut b, &v);
        for (x, y) in a.mass().iter().zip(b.mass()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn folded_vote_conserves_weight(
            mu in 0.0..15.0f64, sigma in 0.0..20.0f64, weight in 0.01..100.0f64, bins in 2usize..80
        ) {
            let mut h = Histogram1D::new(0.0, 10.0, bins).unwrap();
            vote_folded_gaussian(&mut h, &GaussianVote { mu, sigma2: sigma * sigma, weight });
            prop_assert!((h.total() - weight).abs() < 1e-9 * weight.max(1.0));
            prop_assert!(h.mass().iter().all(|m| *m >= 0.0));
        }

        #[test]
        fn gaussian_vote_conserves_weight(
            mu in -5.0..15.0f64, sigma in 0.0..20.0f64, weight in 0.01..100.0f64, bins in 2usize..80
        ) {
            let mut h = Histogram1D::new(0.0, 10.0, bins).unwrap();
            vote_gaussian(&mut h, &GaussianVote { mu, sigma2: sigma * sigma, weight });
            prop_assert!((h.total() - weight).abs() < 1e-9 * weight.max(1.0));
            prop_assert!(h.mass().iter().all(|m| *m >= 0.0));
        }

        #[test]
        fn measurements_are_rigid_invariant(
            t in prop::array::uniform4(-10.0..10.0f64),
            pts in prop::array::uniform4(prop::array::uniform3(-3.0..3.0f64)),
        ) {
            let tf = Transform4Dof::new(t[0], t[1], t[2], t[3]);
            let pts: Vec<Point> = pts.iter().map(|a| Point::from(*a)).collect();
            let moved: Vec<Point> = pts.iter().map(|q| tf.apply(q)).collect();
            for kind in FeatureKind::ALL {
                let k = kind.arity();
                let a = measure(kind, &pts[..k]).unwrap();
                let b = measure(kind, &moved[..k]).unwrap();
                prop_assert!((a - b).abs() < 1e-9, "{} {} {}", kind, a, b);
            }
        }
    }

    #[test]
    fn combination_counts() {
        assert_eq!(combinations(300, 2), 44_850);
        assert_eq!(combinations(300, 4), 330_791_175);
        assert_eq!(combinations(3, 4), 0);
        let mut n = 0;
        for_each_combination(7, 3, |_| n += 1);
        assert_eq!(n, 35);
    }

    #[test]
    fn exact_two_point_cloud() {
        let c = PointCloud::new(vec![p(0., 0., 0.), p(1., 0., 0.)]).unwrap();
        let f = exact_sd(&c, FeatureKind::D2, &SDConfig::default()).unwrap();
        let h = &f.histogram;
        assert_eq!(h.mass()[h.bin_of(1.0)], 1.0);
    }

    #[test]
    fn exact_collinear_area_is_zero() {
        let c = PointCloud::new(vec![p(0., 0., 0.), p(1., 1., 0.), p(2., 2., 0.)]).unwrap();
        let f = exact_sd(&c, FeatureKind::A3, &SDConfig::default()).unwrap();
        assert_eq!(f.histogram.mass()[0], 1.0);
    }

    #[test]
    fn exact_needs_enough_points() {
        let c = PointCloud::new(vec![p(0., 0., 0.); 3]).unwrap();
        assert!(matches!(
            exact_sd(&c, FeatureKind::T3, &SDConfig::default()),
            Err(Error::TooFewPoints { needed: 4, got: 3 })
        ));
    }

    /// Independent enumeration: nested index loops over the raw point list.
    fn brute_force_histogram(pts: &[Point], kind: FeatureKind, h: &Histogram1D) -> Vec<f64> {
        let n = pts.len();
        let mut counts = vec![0.0; h.bins()];
        let mut total = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                if kind == FeatureKind::D2 {
                    counts[h.bin_of((pts[i] - pts[j]).norm())] += 1.0;
                    total += 1.0;
                    continue;
                }
                for l in j + 1..n {
                    let (a, b, c) = (pts[i], pts[j], pts[l]);
                    let area = 0.5 * (b - a).cross(&(c - a)).norm();
                    let per = (a - b).norm() + (b - c).norm() + (c - a).norm();
                    match kind {
                        FeatureKind::A3 => counts[h.bin_of(area)] += 1.0,
                        FeatureKind::R3 => counts[h.bin_of(if per > 0.0 { 2.0 * area / per } else { 0.0 })] += 1.0,
                        _ => {
                            for q in &pts[l + 1..] {
                                let v = (b - a).dot(&(c - a).cross(&(q - a))).abs() / 6.0;
                                counts[h.bin_of(v)] += 1.0;
                                total += 1.0;
                            }
                            continue;
                        }
                    }
                    total += 1.0;
                }
            }
        }
        counts.iter().map(|c| c / total).collect()
    }

    #[test]
    fn exact_matches_enumeration_oracle() {
        let c = random_cloud(50, 21);
        let cfg = SDConfig { exact_sample_budget: 1_000_000, ..SDConfig::default() };
        for kind in FeatureKind::ALL {
            let f = exact_sd(&c, kind, &cfg).unwrap();
            let oracle = brute_force_histogram(c.points(), kind, &f.histogram);
            for (a, b) in f.histogram.mass().iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12, "{kind}");
            }
        }
    }

    #[test]
    fn exact_is_permutation_invariant() {
        let c = random_cloud(40, 8);
        let mut pts = c.points().to_vec();
        pts.reverse();
        pts.swap(3, 17);
        let shuffled = PointCloud::new(pts).unwrap();
        for kind in [FeatureKind::D2, FeatureKind::A3] {
            let a = exact_sd(&c, kind, &SDConfig::default()).unwrap();
            let b = exact_sd(&shuffled, kind, &SDConfig::default()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn sampled_exact_is_seeded_and_close() {
        let c = random_cloud(120, 2);
        let small = SDConfig { exact_sample_budget: 50_000, rng_seed: 4, ..SDConfig::default() };
        let full = SDConfig { exact_sample_budget: u64::MAX, ..SDConfig::default() };
        let a = exact_sd(&c, FeatureKind::A3, &small).unwrap();
        let b = exact_sd(&c, FeatureKind::A3, &small).unwrap();
        assert_eq!(a, b);
        let e = exact_sd(&c, FeatureKind::A3, &full).unwrap();
        assert!(l1_distance(&a.histogram, &e.histogram).unwrap() < 0.1);
    }

    #[test]
    fn hsd_of_isolated_points_equals_exact() {
        let c = PointCloud::new(vec![p(0., 0., 0.), p(10., 0., 0.)]).unwrap();
        let tree = Octree::build(&c, OctreeConfig { leaf_capacity: 1, ..OctreeConfig::default() }).unwrap();
        let cfg = SDConfig::default();
        let h = hsd(&tree, FeatureKind::D2, 3, &cfg).unwrap();
        let e = exact_sd(&c, FeatureKind::D2, &cfg).unwrap();
        assert_eq!(h, e);
    }

    #[test]
    fn hsd_needs_enough_reps() {
        let c = PointCloud::new(vec![p(1., 1., 1.); 5]).unwrap();
        let tree = Octree::build(&c, OctreeConfig::default()).unwrap();
        assert!(matches!(
            hsd(&tree, FeatureKind::D2, 1, &SDConfig::default()),
            Err(Error::TooFewReps { needed: 2, got: 1 })
        ));
        assert!(hsd(&tree, FeatureKind::D2, 0, &SDConfig::default()).is_err());
    }

    #[test]
    fn hsd_converges_to_exact_with_singleton_reps() {
        let c = random_cloud(60, 13);
        let ocfg = OctreeConfig { max_depth: 30, leaf_capacity: 1, reps_per_node: 1 };
        let tree = Octree::build(&c, ocfg).unwrap();
        let cfg = SDConfig { exact_sample_budget: 1_000_000, ..SDConfig::default() };
        let reps = tree.reps_at_level(30);
        assert!(reps.iter().all(|r| r.weight == 1 && r.scatter == 0.0));
        for kind in FeatureKind::ALL {
            let h = hsd(&tree, kind, 30, &cfg).unwrap();
            let e = exact_sd(&c, kind, &cfg).unwrap();
            assert!(l1_distance(&h.histogram, &e.histogram).unwrap() < 1e-12, "{kind}");
        }
    }

    #[test]
    fn hsd_close_to_exact_at_level_three() {
        let c = random_cloud(300, 31);
        let tree = Octree::build(&c, OctreeConfig::default()).unwrap();
        let cfg = SDConfig::default();
        for kind in [FeatureKind::D2, FeatureKind::A3, FeatureKind::R3] {
            let exact_cfg = SDConfig { exact_sample_budget: 5_000_000, ..cfg };
            let e = exact_sd(&c, kind, &exact_cfg).unwrap();
            let h = hsd(&tree, kind, 3, &cfg).unwrap();
            let d = l1_distance(&h.histogram, &e.histogram).unwrap();
            assert!(d <= 0.15, "{kind}: {d}");
        }
    }

    #[test]
    fn feature_csv_layout() {
        let c = random_cloud(10, 1);
        let f = exact_sd(&c, FeatureKind::D2, &SDConfig { bins: 4, ..SDConfig::default() }).unwrap();
        let csv = features_to_csv(&[f]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "kind,bin_index,bin_lo,bin_hi,mass");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("D2,0,0,"));
    }
}
