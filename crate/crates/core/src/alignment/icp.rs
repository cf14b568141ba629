use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud, Transform4Dof};
use crate::spatial::KdTree;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpConfig {
    pub max_iters: usize,
    /// Convergence tolerance on the trimmed RMS. `None` uses
    /// `1e-5 * target.diameter()`.
    pub rms_tol: Option<f64>,
    /// Fraction of worst correspondences dropped each iteration.
    pub trim_fraction: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        Self {
            max_iters: 50,
            rms_tol: None,
            trim_fraction: 0.1,
        }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.trim_fraction) {
            return Err(Error::InvalidConfig(format!(
                "trim_fraction {} must lie in [0, 1)",
                self.trim_fraction
            )));
        }
        if let Some(t) = self.rms_tol {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::InvalidConfig(format!("rms_tol {t} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Maps the source into the target frame.
    pub transform: Transform4Dof,
    /// Trimmed RMS of the final transform.
    pub rms: f64,
    pub iterations: usize,
    /// Trimmed RMS evaluated at the start of every iteration; the last entry
    /// equals `rms`.
    pub rms_history: Vec<f64>,
}

/// Closed-form least-squares 4-DOF motion taking `src[i]` onto `dst[i]`.
pub fn procrustes_4dof(src: &[Point], dst: &[Point]) -> Result<Transform4Dof> {
    if src.len() != dst.len() {
        return Err(Error::DimensionMismatch {
            expected: src.len(),
            got: dst.len(),
        });
    }
    if src.is_empty() || src.iter().all(|p| *p == src[0]) {
        return Err(Error::DegenerateCorrespondence);
    }
    let n = src.len() as f64;
    let cs = src.iter().fold(nalgebra::Vector3::zeros(), |a, p| a + p.coords) / n;
    let cd = dst.iter().fold(nalgebra::Vector3::zeros(), |a, p| a + p.coords) / n;
    let (mut dot, mut cross) = (0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let (sx, sy) = (s.x - cs.x, s.y - cs.y);
        let (dx, dy) = (d.x - cd.x, d.y - cd.y);
        dot += sx * dx + sy * dy;
        cross += sx * dy - sy * dx;
    }
    let theta = cross.atan2(dot);
    let (sin, cos) = theta.sin_cos();
    Ok(Transform4Dof::new(
        cd.x - (cos * cs.x - sin * cs.y),
        cd.y - (sin * cs.x + cos * cs.y),
        cd.z - cs.z,
        theta,
    ))
}

/// Trimmed point-to-point ICP restricted to yaw plus translation. A step
/// that would raise the trimmed RMS is discarded and ends the iteration, so
/// `rms_history` never increases.
pub fn icp_4dof(source: &PointCloud, target: &PointCloud, cfg: &IcpConfig) -> Result<IcpResult> {
    cfg.validate()?;
    for c in [source, target] {
        if c.len() < 3 {
            return Err(Error::TooFewPoints { needed: 3, got: c.len() });
        }
    }
    let tol = cfg.rms_tol.unwrap_or(1e-5 * target.diameter());
    let tree = KdTree::new(target.points());
    let n = source.len();
    let keep = (((1.0 - cfg.trim_fraction) * n as f64).ceil() as usize).clamp(3.min(n), n);

    let mut transform = Transform4Dof::identity();
    let mut previous = transform;
    let mut history: Vec<f64> = Vec::new();
    loop {
        let moved: Vec<Point> = source.points().iter().map(|p| transform.apply(p)).collect();
        let mut pairs: Vec<(usize, usize, f64)> = moved
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let (j, d2) = tree.nearest(p).expect("target is non-empty");
                (i, j, d2)
            })
            .collect();
        pairs.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
        pairs.truncate(keep);
        let rms = (pairs.iter().map(|p| p.2).sum::<f64>() / keep as f64).sqrt();
        // a step can only raise the trimmed RMS through rounding at
        // convergence; keep the better transform
        if history.last().is_some_and(|&prev| rms > prev) {
            transform = previous;
            break;
        }
        let improvement = history.last().map(|prev| prev - rms);
        history.push(rms);
        if rms <= tol || improvement.is_some_and(|d| d < tol) || history.len() >= cfg.max_iters {
            break;
        }
        let src: Vec<Point> = pairs.iter().map(|p| moved[p.0]).collect();
        let dst: Vec<Point> = pairs.iter().map(|p| target.points()[p.1]).collect();
        let delta = procrustes_4dof(&src, &dst)?;
        previous = transform;
        transform = transform.then(&delta);
    }
    Ok(IcpResult {
        transform,
        rms: *history.last().expect("at least one iteration"),
        iterations: history.len(),
        rms_history: history,
    })
}
