//! Ground tiling of a street scene and candidate-tile selection.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::histogram::Histogram1D;
use crate::io::{format_sig9, GrayImage};
use crate::synth::Scene;

pub const TILE_HIST_BINS: usize = 16;
pub const TILE_MAX_HEIGHT: f64 = 10.0;
/// Length of [`TileFeature::to_vector`].
pub const TILE_FEATURE_DIMS: usize = 4 + TILE_HIST_BINS;
const GROUND_PERCENTILE: f64 = 0.05;
const MIN_SCALE: f64 = 1e-6;

/// Regular xy grid anchored at the scene's minimum corner. Tile `(tx, ty)`
/// has index `ty * width + tx`.
#[derive(Debug, Clone, PartialEq)]
pub struct TileGrid {
    pub origin: (f64, f64),
    pub tile_size: f64,
    pub width: usize,
    pub height: usize,
    pub tiles: Vec<Vec<usize>>,
}

impl TileGrid {
    pub fn len(&self) -> usize {
        self.tiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiles.is_empty()
    }

    pub fn index(&self, tx: usize, ty: usize) -> usize {
        ty * self.width + tx
    }

    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    pub fn center(&self, index: usize) -> (f64, f64) {
        let (tx, ty) = self.coords(index);
        (
            self.origin.0 + (tx as f64 + 0.5) * self.tile_size,
            self.origin.1 + (ty as f64 + 0.5) * self.tile_size,
        )
    }

    /// Tile containing `(x, y)`, or `None` outside the grid.
    pub fn tile_of(&self, x: f64, y: f64) -> Option<usize> {
        let fx = ((x - self.origin.0) / self.tile_size).floor();
        let fy = ((y - self.origin.1) / self.tile_size).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        Some(self.index(fx as usize, fy as usize))
    }
}

pub fn build_grid(scene: &PointCloud, tile_size: f64) -> Result<TileGrid> {
    if !(tile_size.is_finite() && tile_size > 0.0) {
        return Err(Error::InvalidConfig(format!("tile size {tile_size} must be positive")));
    }
    let b = scene.bounds();
    let origin = (b.min.x, b.min.y);
    let cell = |v: f64, o: f64| ((v - o) / tile_size).floor() as usize;
    let width = cell(b.max.x, origin.0) + 1;
    let height = cell(b.max.y, origin.1) + 1;
    let mut tiles = vec![Vec::new(); width * height];
    for (i, p) in scene.points().iter().enumerate() {
        let tx = cell(p.x, origin.0).min(width - 1);
        let ty = cell(p.y, origin.1).min(height - 1);
        tiles[ty * width + tx].push(i);
    }
    Ok(TileGrid {
        origin,
        tile_size,
        width,
        height,
        tiles,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileFeature {
    pub point_count: usize,
    /// Heights relative to the tile's ground estimate.
    pub max_height: f64,
    pub min_height: f64,
    /// Fraction of points per height bin over `[0, 10]` m.
    pub height_histogram: Histogram1D,
    /// Points per m².
    pub density: f64,
}

impl TileFeature {
    fn empty() -> Self {
        Self {
            point_count: 0,
            max_height: 0.0,
            min_height: 0.0,
            height_histogram: Histogram1D::new(0.0, TILE_MAX_HEIGHT, TILE_HIST_BINS).expect("valid range"),
            density: 0.0,
        }
    }

    /// `[point_count, max_height, min_height, density, histogram...]`
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = vec![self.point_count as f64, self.max_height, self.min_height, self.density];
        v.extend_from_slice(self.height_histogram.mass());
        v
    }
}

/// Nearest-rank 5th percentile.
fn ground_estimate(sorted_z: &[f64]) -> f64 {
    let rank = (GROUND_PERCENTILE * sorted_z.len() as f64).ceil() as usize;
    sorted_z[rank.clamp(1, sorted_z.len()) - 1]
}

pub fn tile_features(grid: &TileGrid, scene: &PointCloud) -> Vec<TileFeature> {
    let area = grid.tile_size * grid.tile_size;
    grid.tiles
        .par_iter()
        .map(|idx| {
            if idx.is_empty() {
                return TileFeature::empty();
            }
            let mut z: Vec<f64> = idx.iter().map(|&i| scene.points()[i].z).collect();
            z.sort_by(f64::total_cmp);
            let ground = ground_estimate(&z);
            let mut f = TileFeature::empty();
            for v in &z {
                f.height_histogram.vote(v - ground, 1.0);
            }
            f.height_histogram.normalize();
            f.point_count = z.len();
            f.min_height = z[0] - ground;
            f.max_height = z[z.len() - 1] - ground;
            f.density = z.len() as f64 / area;
            f
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasicFilter {
    pub min_points: usize,
    pub height_lo: f64,
    pub height_hi: f64,
}

impl Default for BasicFilter {
    fn default() -> Self {
        Self {
            min_points: 20,
            height_lo: 0.3,
            height_hi: 10.0,
        }
    }
}

/// Occupied tiles with enough points and a plausible object height,
/// ascending by index.
pub fn basic_filter(features: &[TileFeature], filter: &BasicFilter) -> Vec<usize> {
    features
        .iter()
        .enumerate()
        .filter(|(_, f)| {
            f.point_count > 0
                && f.point_count >= filter.min_points
                && f.max_height >= filter.height_lo
                && f.max_height <= filter.height_hi
        })
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Acceptance {
    /// Keep tiles within this normalized distance of the center.
    Threshold(f64),
    /// Keep the K tiles closest to the center.
    KNearest(usize),
}

impl Default for Acceptance {
    fn default() -> Self {
        Acceptance::Threshold(2.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    pub class: String,
    pub center: Vec<f64>,
    /// Per-coordinate standard deviation, floored at 1e-6.
    pub scale: Vec<f64>,
    pub acceptance: Acceptance,
}

pub fn train_class_model(positive: &[TileFeature], class: &str, acceptance: Acceptance) -> Result<ClassModel> {
    if positive.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    match acceptance {
        Acceptance::Threshold(t) if !(t >= 0.0 && t.is_finite()) => {
            return Err(Error::InvalidConfig(format!("threshold {t} must be non-negative")))
        }
        Acceptance::KNearest(0) => return Err(Error::InvalidConfig("K must be at least 1".into())),
        _ => {}
    }
    let n = positive.len() as f64;
    let vectors: Vec<Vec<f64>> = positive.iter().map(TileFeature::to_vector).collect();
    let mut center = vec![0.0; TILE_FEATURE_DIMS];
    for v in &vectors {
        center.iter_mut().zip(v).for_each(|(c, x)| *c += x);
    }
    center.iter_mut().for_each(|c| *c /= n);
    let mut var = [0.0; TILE_FEATURE_DIMS];
    for v in &vectors {
        var.iter_mut().zip(v.iter().zip(&center)).for_each(|(s, (x, c))| *s += (x - c) * (x - c));
    }
    let scale = var.iter().map(|s| (s / n).sqrt().max(MIN_SCALE)).collect();
    Ok(ClassModel {
        class: class.to_string(),
        center,
        scale,
        acceptance,
    })
}

impl ClassModel {
    /// Root-mean-square of the per-coordinate z-scores, so that a typical
    /// member of the training distribution lies near 1 whatever the number of
    /// coordinates.
    pub fn distance(&self, f: &TileFeature) -> f64 {
        let v = f.to_vector();
        let ss: f64 = v
            .iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(x, (c, s))| ((x - c) / s).powi(2))
            .sum();
        (ss / v.len() as f64).sqrt()
    }
}

/// Subset of `candidates` accepted by the model, ascending by index.
pub fn refine_roi(candidates: &[usize], features: &[TileFeature], model: &ClassModel) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = candidates.iter().map(|&i| (i, model.distance(&features[i]))).collect();
    let mut kept: Vec<usize> = match model.acceptance {
        Acceptance::Threshold(t) => scored.iter().filter(|s| s.1 <= t).map(|s| s.0).collect(),
        Acceptance::KNearest(k) => {
            scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            scored.iter().take(k).map(|s| s.0).collect()
        }
    };
    kept.sort_unstable();
    kept.dedup();
    kept
}

/// `tile_x,tile_y,center_x,center_y,point_count,max_height,kept_by_stage`,
/// one row per basic-filter candidate; `kept_by_stage` is `refined` for
/// tiles that also passed refinement and `basic` otherwise.
pub fn roi_csv(grid: &TileGrid, features: &[TileFeature], basic: &[usize], refined: &[usize]) -> String {
    let refined: BTreeSet<usize> = refined.iter().copied().collect();
    let mut out = String::from("tile_x,tile_y,center_x,center_y,point_count,max_height,kept_by_stage\n");
    for &i in basic {
        let (tx, ty) = grid.coords(i);
        let (cx, cy) = grid.center(i);
        let stage = if refined.contains(&i) { "refined" } else { "basic" };
        out.push_str(&format!(
            "{tx},{ty},{},{},{},{},{stage}\n",
            format_sig9(cx),
            format_sig9(cy),
            features[i].point_count,
            format_sig9(features[i].max_height)
        ));
    }
    out
}

pub const MASK_EMPTY: u8 = 0;
pub const MASK_OCCUPIED: u8 = 85;
pub const MASK_BASIC: u8 = 170;
pub const MASK_REFINED: u8 = 255;

/// One pixel per tile with `+y` up.
pub fn roi_mask(grid: &TileGrid, features: &[TileFeature], basic: &[usize], refined: &[usize]) -> GrayImage {
    let mut img = GrayImage::new(grid.width, grid.height);
    let mut put = |i: usize, v: u8| {
        let (tx, ty) = grid.coords(i);
        img.set(tx, grid.height - 1 - ty, v);
    };
    for (i, f) in features.iter().enumerate() {
        put(i, if f.point_count > 0 { MASK_OCCUPIED } else { MASK_EMPTY });
    }
    for &i in basic {
        put(i, MASK_BASIC);
    }
    for &i in refined {
        put(i, MASK_REFINED);
    }
    img
}

/// Tiles that a planted object occupies: its footprint-center tile plus every
/// tile holding at least `min_points` of its points. Returns one ascending
/// list per object.
pub fn planted_tiles(grid: &TileGrid, scene: &Scene, min_points: usize) -> Vec<Vec<usize>> {
    let pts = scene.cloud.points();
    scene
        .objects
        .iter()
        .map(|o| {
            let mut counts = std::collections::BTreeMap::new();
            for i in o.points.clone() {
                if let Some(t) = grid.tile_of(pts[i].x, pts[i].y) {
                    *counts.entry(t).or_insert(0usize) += 1;
                }
            }
            let mut tiles: BTreeSet<usize> =
                counts.iter().filter(|(_, c)| **c >= min_points).map(|(t, _)| *t).collect();
            if let Some(t) = grid.tile_of(o.placement.tx, o.placement.ty) {
                tiles.insert(t);
            }
            tiles.into_iter().collect()
        })
        .collect()
}
