//! Seeded synthetic objects and street scenes.
//!
//! Objects are sampled on their surfaces, rest on `z = 0` and are centered
//! on the z axis before any placement transform.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud, Transform4Dof};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShapeClass {
    Sphere,
    Cylinder,
    Box,
    Pole,
    Car,
    Pedestrian,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 6] = [
        ShapeClass::Sphere,
        ShapeClass::Cylinder,
        ShapeClass::Box,
        ShapeClass::Pole,
        ShapeClass::Car,
        ShapeClass::Pedestrian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Sphere => "sphere",
            ShapeClass::Cylinder => "cylinder",
            ShapeClass::Box => "box",
            ShapeClass::Pole => "pole",
            ShapeClass::Car => "car",
            ShapeClass::Pedestrian => "pedestrian",
        }
    }
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown shape class `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectParams {
    pub points: usize,
    /// Relative size jitter: every dimension is scaled by `1 + U(-j, j)`.
    pub size_jitter: f64,
    /// Standard deviation of per-point Gaussian noise (m).
    pub noise: f64,
}

impl Default for ObjectParams {
    fn default() -> Self {
        Self {
            points: 300,
            size_jitter: 0.1,
            noise: 0.005,
        }
    }
}

fn jitter(rng: &mut ChaCha8Rng, j: f64) -> f64 {
    if j > 0.0 {
        1.0 + rng.random_range(-j..j)
    } else {
        1.0
    }
}

/// An axis-aligned box surface patch list: (center, half extents).
struct BoxPart {
    center: [f64; 3],
    half: [f64; 3],
}

impl BoxPart {
    fn area(&self) -> f64 {
        let [a, b, c] = self.half;
        8.0 * (a * b + b * c + a * c)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Point {
        let [a, b, c] = self.half;
        let faces = [b * c, b * c, a * c, a * c, a * b, a * b];
        let total: f64 = faces.iter().sum();
        let mut t = rng.random_range(0.0..total);
        let mut face = 5;
        for (i, f) in faces.iter().enumerate() {
            if t < *f {
                face = i;
                break;
            }
            t -= f;
        }
        let mut u = [
            rng.random_range(-a..=a),
            rng.random_range(-b..=b),
            rng.random_range(-c..=c),
        ];
        let axis = face / 2;
        u[axis] = if face % 2 == 0 { -self.half[axis] } else { self.half[axis] };
        Point::new(self.center[0] + u[0], self.center[1] + u[1], self.center[2] + u[2])
    }
}

fn sample_sphere(rng: &mut ChaCha8Rng, center: [f64; 3], r: f64) -> Point {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi = rng.random_range(0.0..2.0 * PI);
    let s = (1.0 - z * z).sqrt();
    Point::new(center[0] + r * s * phi.cos(), center[1] + r * s * phi.sin(), center[2] + r * z)
}

/// Closed cylinder standing on `base_z`.
fn sample_cylinder(rng: &mut ChaCha8Rng, base_z: f64, r: f64, h: f64) -> Point {
    let side = 2.0 * PI * r * h;
    let caps = 2.0 * PI * r * r;
    let phi = rng.random_range(0.0..2.0 * PI);
    if rng.random_range(0.0..side + caps) < side {
        Point::new(r * phi.cos(), r * phi.sin(), base_z + rng.random_range(0.0..h))
    } else {
        let rr = r * rng.random_range(0.0..1.0f64).sqrt();
        let z = if rng.random_bool(0.5) { base_z } else { base_z + h };
        Point::new(rr * phi.cos(), rr * phi.sin(), z)
    }
}

/// Samples one object of the given class in its canonical pose.
pub fn synth_object(class: ShapeClass, params: &ObjectParams, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let j = params.size_jitter;
    let mut pts = Vec::with_capacity(params.points);
    match class {
        ShapeClass::Sphere => {
            let r = 0.5 * jitter(&mut rng, j);
            for _ in 0..params.points {
                pts.push(sample_sphere(&mut rng, [0.0, 0.0, r], r));
            }
        }
        ShapeClass::Cylinder => {
            let r = 0.3 * jitter(&mut rng, j);
            let h = 1.6 * jitter(&mut rng, j);
            for _ in 0..params.points {
                pts.push(sample_cylinder(&mut rng, 0.0, r, h));
            }
        }
        ShapeClass::Box => {
            let half = [0.6 * jitter(&mut rng, j), 0.4 * jitter(&mut rng, j), 0.35 * jitter(&mut rng, j)];
            let b = BoxPart { center: [0.0, 0.0, half[2]], half };
            for _ in 0..params.points {
                pts.push(b.sample(&mut rng));
            }
        }
        ShapeClass::Pole => {
            let r = 0.1 * jitter(&mut rng, j);
            let h = 5.0 * jitter(&mut rng, j);
            for _ in 0..params.points {
                pts.push(sample_cylinder(&mut rng, 0.0, r, h));
            }
        }
        ShapeClass::Car => {
            let s = jitter(&mut rng, j);
            let body = BoxPart { center: [0.0, 0.0, 0.55 * s], half: [2.2 * s, 0.9 * s, 0.4 * s] };
            // cabin set back toward the rear so the shape has no yaw symmetry
            let cabin = BoxPart { center: [-0.5 * s, 0.0, 1.25 * s], half: [1.1 * s, 0.8 * s, 0.3 * s] };
            let (ab, ac) = (body.area(), cabin.area());
            for _ in 0..params.points {
                let part = if rng.random_range(0.0..ab + ac) < ab { &body } else { &cabin };
                pts.push(part.sample(&mut rng));
            }
        }
        ShapeClass::Pedestrian => {
            let s = jitter(&mut rng, j);
            let (r, h, head) = (0.2 * s, 1.5 * s, 0.12 * s);
            let body_area = 2.0 * PI * r * h + 2.0 * PI * r * r;
            let head_area = 4.0 * PI * head * head;
            for _ in 0..params.points {
                if rng.random_range(0.0..body_area + head_area) < body_area {
                    pts.push(sample_cylinder(&mut rng, 0.0, r, h));
                } else {
                    pts.push(sample_sphere(&mut rng, [0.0, 0.0, h + head], head));
                }
            }
        }
    }
    if params.noise > 0.0 {
        let n = Normal::new(0.0, params.noise).expect("positive noise");
        for p in &mut pts {
            p.x += n.sample(&mut rng);
            p.y += n.sample(&mut rng);
            p.z += n.sample(&mut rng);
        }
    }
    PointCloud::new(pts).expect("non-empty synthetic cloud").with_label(class.name())
}

/// A random 4-DOF placement with translation in `[-t, t]` on every axis and
/// yaw in `[-theta, theta]`.
pub fn random_transform(rng: &mut impl Rng, t: f64, theta: f64) -> Transform4Dof {
    let range = |rng: &mut dyn rand::RngCore, a: f64| if a > 0.0 { rng.random_range(-a..=a) } else { 0.0 };
    Transform4Dof::new(range(rng, t), range(rng, t), range(rng, t), range(rng, theta))
}

/// `per_class` objects of each class, in class order, each under a random
/// yaw and horizontal offset.
pub fn synth_dataset(
    classes: &[ShapeClass],
    per_class: usize,
    params: &ObjectParams,
    seed: u64,
) -> Vec<(PointCloud, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(classes.len() * per_class);
    for class in classes {
        for _ in 0..per_class {
            let obj_seed = rng.random();
            let yaw = rng.random_range(-PI..PI);
            let t = Transform4Dof::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), 0.0, yaw);
            out.push((synth_object(*class, params, obj_seed).transformed(&t), class.name().to_string()));
        }
    }
    out
}

/// `copies` instances of one object, each under its own 4-DOF placement
/// (translation up to `max_shift` per axis, yaw up to `max_yaw`). The first
/// copy keeps the canonical pose. Returns the clouds and their placements.
pub fn synth_group(
    class: ShapeClass,
    params: &ObjectParams,
    copies: usize,
    max_shift: f64,
    max_yaw: f64,
    seed: u64,
) -> Vec<(PointCloud, Transform4Dof)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = synth_object(class, params, rng.random());
    (0..copies)
        .map(|i| {
            let t = if i == 0 {
                Transform4Dof::identity()
            } else {
                random_transform(&mut rng, max_shift, max_yaw)
            };
            (base.transformed(&t), t)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    /// Side of the square scene (m).
    pub extent: f64,
    /// Ground points per m².
    pub ground_density: f64,
    pub ground_noise: f64,
    /// Object classes to plant, one object per entry.
    pub objects: Vec<ShapeClass>,
    /// Surface points sampled per object.
    pub object_points: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            extent: 40.0,
            ground_density: 20.0,
            ground_noise: 0.02,
            objects: vec![
                ShapeClass::Car,
                ShapeClass::Car,
                ShapeClass::Pole,
                ShapeClass::Pole,
                ShapeClass::Pole,
                ShapeClass::Pedestrian,
                ShapeClass::Pedestrian,
                ShapeClass::Cylinder,
            ],
            object_points: 1500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedObject {
    pub class: ShapeClass,
    pub placement: Transform4Dof,
    /// Range of this object's points in the scene cloud.
    pub points: std::ops::Range<usize>,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub cloud: PointCloud,
    pub objects: Vec<PlantedObject>,
}

/// Flat noisy ground with the requested objects placed at random
/// non-overlapping positions (at least 6 m apart, 3 m from the border).
pub fn synth_scene(params: &SceneParams, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, params.ground_noise.max(1e-12)).expect("valid noise");
    let n_ground = (params.extent * params.extent * params.ground_density).round() as usize;
    let mut pts: Vec<Point> = (0..n_ground)
        .map(|_| {
            Point::new(
                rng.random_range(0.0..params.extent),
                rng.random_range(0.0..params.extent),
                noise.sample(&mut rng),
            )
        })
        .collect();

    let mut centers: Vec<(f64, f64)> = Vec::new();
    let mut objects = Vec::new();
    for class in &params.objects {
        let mut pos = (0.0, 0.0);
        for _ in 0..1000 {
            pos = (
                rng.random_range(3.0..params.extent - 3.0),
                rng.random_range(3.0..params.extent - 3.0),
            );
            if centers.iter().all(|c| (c.0 - pos.0).hypot(c.1 - pos.1) >= 6.0) {
                break;
            }
        }
        centers.push(pos);
        let placement = Transform4Dof::new(pos.0, pos.1, 0.0, rng.random_range(-PI..PI));
        let obj = synth_object(
            *class,
            &ObjectParams {
                points: params.object_points,
                ..ObjectParams::default()
            },
            rng.random(),
        );
        let start = pts.len();
        pts.extend(obj.points().iter().map(|p| placement.apply(p)));
        objects.push(PlantedObject {
            class: *class,
            placement,
            points: start..pts.len(),
        });
    }
    Scene {
        cloud: PointCloud::new(pts).expect("scene has ground points"),
        objects,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objects_are_seeded() {
        for class in ShapeClass::ALL {
            let a = synth_object(class, &ObjectParams::default(), 3);
            let b = synth_object(class, &ObjectParams::default(), 3);
            assert_eq!(a, b);
            assert_eq!(a.len(), 300);
            assert_eq!(a.label(), Some(class.name()));
            assert!(a.bounds().min.z > -0.05);
        }
    }

    #[test]
    fn dataset_layout() {
        let ds = synth_dataset(&[ShapeClass::Sphere, ShapeClass::Box], 4, &ObjectParams::default(), 1);
        assert_eq!(ds.len(), 8);
        assert!(ds[..4].iter().all(|(_, c)| c == "sphere"));
        assert!(ds[4..].iter().all(|(_, c)| c == "box"));
    }

    #[test]
    fn scene_objects_are_separated() {
        let s = synth_scene(&SceneParams::default(), 5);
        assert_eq!(s.objects.len(), 8);
        for (i, a) in s.objects.iter().enumerate() {
            for b in &s.objects[i + 1..] {
                let d = (a.placement.tx - b.placement.tx).hypot(a.placement.ty - b.placement.ty);
                assert!(d >= 6.0);
            }
        }
        assert_eq!(s.objects.last().unwrap().points.end, s.cloud.len());
    }

    #[test]
    fn group_copies_share_one_shape() {
        let g = synth_group(ShapeClass::Car, &ObjectParams::default(), 3, 0.5, 0.3, 9);
        assert_eq!(g.len(), 3);
        assert_eq!(g[0].1, Transform4Dof::identity());
        for (c, t) in &g[1..] {
            let back = c.transformed(&t.inverse());
            for (p, q) in back.points().iter().zip(g[0].0.points()) {
                assert!((p - q).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn shape_class_names_parse() {
        for c in ShapeClass::ALL {
            assert_eq!(c.name().parse::<ShapeClass>().unwrap(), c);
        }
        assert!("blob".parse::<ShapeClass>().is_err());
    }
}
