//! Core geometric types: points, clouds, bounding boxes and the 4-DOF
//! (planar translation, vertical translation, yaw) rigid transform.

use std::f64::consts::PI;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

pub type Point = Point3<f64>;

/// An ordered, non-empty list of finite 3-D points with an optional category
/// label.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    label: Option<String>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if let Some(index) = points
            .iter()
            .position(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            points,
            label: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.points).expect("cloud is non-empty")
    }

    /// Diagonal of the axis-aligned bounding box. This is an upper bound on
    /// the true diameter and is the scale used for every relative tolerance
    /// and automatic histogram range in the crate.
    pub fn diameter(&self) -> f64 {
        self.bounds().diagonal()
    }

    pub fn centroid(&self) -> Point {
        let sum = self
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Point::from(sum / self.points.len() as f64)
    }

    pub fn transformed(&self, t: &Transform4Dof) -> PointCloud {
        apply_transform(self, t)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn new(min: Point, max: Point) -> Self {
        debug_assert!(min.x <= max.x && min.y <= max.y && min.z <= max.z);
        Self { min, max }
    }

    pub fn from_points(points: &[Point]) -> Option<Self> {
        let first = points.first()?;
        let (min, max) = points.iter().fold((*first, *first), |(lo, hi), p| {
            (
                Point::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z)),
                Point::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z)),
            )
        });
        Some(Self { min, max })
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn center(&self) -> Point {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    /// Smallest cube sharing this box's center that contains it. Degenerate
    /// (flat or single-point) boxes are padded by `1e-9 * max(1, extent)`.
    pub fn to_cube(&self) -> Aabb {
        let extent = self.extent().max();
        let eps = 1e-9 * extent.max(1.0);
        let half = extent / 2.0 + eps;
        let c = self.center();
        let h = Vector3::repeat(half);
        Aabb::new(c - h, c + h)
    }
}

/// Rigid motion with four degrees of freedom: rotation by `theta` about the
/// z axis followed by translation `(tx, ty, tz)`.
///
/// `theta` is kept in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform4Dof {
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    theta: f64,
}

impl Default for Transform4Dof {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform4Dof {
    pub fn new(tx: f64, ty: f64, tz: f64, theta: f64) -> Self {
        Self {
            tx,
            ty,
            tz,
            theta: normalize_angle(theta),
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn apply(&self, p: &Point) -> Point {
        let (s, c) = self.theta.sin_cos();
        Point::new(
            c * p.x - s * p.y + self.tx,
            s * p.x + c * p.y + self.ty,
            p.z + self.tz,
        )
    }

    pub fn inverse(&self) -> Self {
        let (s, c) = self.theta.sin_cos();
        // -R^T t
        Self::new(
            -(c * self.tx + s * self.ty),
            -(-s * self.tx + c * self.ty),
            -self.tz,
            -self.theta,
        )
    }

    /// `self.then(other)` maps `p` to `other.apply(self.apply(p))`.
    pub fn then(&self, other: &Transform4Dof) -> Self {
        let (s, c) = other.theta.sin_cos();
        Self::new(
            c * self.tx - s * self.ty + other.tx,
            s * self.tx + c * self.ty + other.ty,
            self.tz + other.tz,
            self.theta + other.theta,
        )
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Applies `t` to every point, preserving order and label.
pub fn apply_transform(cloud: &PointCloud, t: &Transform4Dof) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| t.apply(p)).collect(),
        label: cloud.label.clone(),
    }
}
