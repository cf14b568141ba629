//! Category-separation evaluation: per-object D2/A3/T3/R3 histograms,
//! pairwise distance matrices and within/across-category statistics.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::histogram::{emd_1d, l1_distance, Histogram1D};
use crate::io::{format_sig9, load_cloud_auto, load_manifest, GrayImage};
use crate::octree::{Octree, OctreeConfig};
use crate::shape_dist::{exact_sd, hsd, FeatureKind, SDConfig, SDFeature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FeatureMode {
    #[default]
    Exact,
    Hsd,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 2] = [FeatureMode::Exact, FeatureMode::Hsd];

    pub fn name(self) -> &'static str {
        match self {
            FeatureMode::Exact => "exact",
            FeatureMode::Hsd => "hsd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Strategy {
    #[default]
    Average,
    Smallest,
    Biggest,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Average, Strategy::Smallest, Strategy::Biggest];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Average => "average",
            Strategy::Smallest => "smallest",
            Strategy::Biggest => "biggest",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum HistogramMetric {
    #[default]
    Emd,
    L1,
}

impl HistogramMetric {
    pub const ALL: [HistogramMetric; 2] = [HistogramMetric::Emd, HistogramMetric::L1];

    pub fn name(self) -> &'static str {
        match self {
            HistogramMetric::Emd => "emd",
            HistogramMetric::L1 => "l1",
        }
    }
}

macro_rules! named_enum_traits {
    ($t:ty, $what:literal) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $t {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                <$t>::ALL
                    .into_iter()
                    .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown {} `{s}`", $what)))
            }
        }
    };
}

named_enum_traits!(FeatureMode, "feature mode");
named_enum_traits!(Strategy, "strategy");
named_enum_traits!(HistogramMetric, "histogram metric");

/// Objects with category labels. Categories are kept sorted by name.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    objects: Vec<PointCloud>,
    labels: Vec<String>,
    categories: Vec<String>,
}

impl LabeledDataset {
    pub fn new(items: Vec<(PointCloud, String)>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let (objects, labels): (Vec<_>, Vec<_>) = items.into_iter().unzip();
        let categories = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        Ok(Self {
            objects,
            labels,
            categories,
        })
    }

    pub fn from_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let items = load_manifest(path)?
            .into_iter()
            .map(|e| Ok((load_cloud_auto(&e.path)?, e.category)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(items)
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn objects(&self) -> &[PointCloud] {
        &self.objects
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    /// Object indices sorted by category, then by input position.
    pub fn category_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|a, b| self.labels[*a].cmp(&self.labels[*b]).then(a.cmp(b)));
        order
    }
}

/// Shared histogram ranges: `[0, kind.auto_upper_bound(diameter)]` with the
/// largest object diameter of the dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureRanges {
    pub diameter: f64,
}

impl FeatureRanges {
    pub fn from_clouds<'a>(clouds: impl IntoIterator<Item = &'a PointCloud>) -> Self {
        let d = clouds.into_iter().map(PointCloud::diameter).fold(0.0, f64::max);
        Self {
            diameter: d.max(1e-9),
        }
    }

    pub fn config_for(&self, kind: FeatureKind, base: &SDConfig) -> SDConfig {
        base.with_fixed_range(0.0, kind.auto_upper_bound(self.diameter))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub sd: SDConfig,
    pub octree: OctreeConfig,
    pub hsd_level: usize,
    pub metric: HistogramMetric,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            sd: SDConfig::default(),
            octree: OctreeConfig::default(),
            hsd_level: 3,
            metric: HistogramMetric::Emd,
        }
    }
}

pub type ObjectFeatures = [SDFeature; 4];

/// D2, A3, T3 and R3 histograms of one object over the shared ranges.
pub fn object_4features(
    cloud: &PointCloud,
    mode: FeatureMode,
    ranges: &FeatureRanges,
    cfg: &EvalConfig,
) -> Result<ObjectFeatures> {
    if cloud.len() < 4 {
        return Err(Error::TooFewPoints {
            needed: 4,
            got: cloud.len(),
        });
    }
    let tree = match mode {
        FeatureMode::Hsd => Some(Octree::build(cloud, cfg.octree)?),
        FeatureMode::Exact => None,
    };
    let one = |kind: FeatureKind| {
        let sd = ranges.config_for(kind, &cfg.sd);
        match &tree {
            Some(t) => hsd(t, kind, cfg.hsd_level, &sd),
            None => exact_sd(cloud, kind, &sd),
        }
    };
    Ok([
        one(FeatureKind::D2)?,
        one(FeatureKind::A3)?,
        one(FeatureKind::T3)?,
        one(FeatureKind::R3)?,
    ])
}

fn histogram_distance(a: &Histogram1D, b: &Histogram1D, metric: HistogramMetric) -> Result<f64> {
    match metric {
        HistogramMetric::Emd => emd_1d(a, b),
        HistogramMetric::L1 => l1_distance(a, b),
    }
}

/// Four per-kind histogram distances aggregated by `strategy`.
pub fn pairwise_distance(
    a: &ObjectFeatures,
    b: &ObjectFeatures,
    strategy: Strategy,
    metric: HistogramMetric,
) -> Result<f64> {
    let mut d = [0.0; 4];
    for (k, (x, y)) in a.iter().zip(b).enumerate() {
        d[k] = histogram_distance(&x.histogram, &y.histogram, metric)?;
    }
    Ok(match strategy {
        Strategy::Average => d.iter().sum::<f64>() / 4.0,
        Strategy::Smallest => d.iter().copied().fold(f64::INFINITY, f64::min),
        Strategy::Biggest => d.iter().copied().fold(0.0, f64::max),
    })
}

/// Features of every dataset object, in input order.
pub fn dataset_features(ds: &LabeledDataset, mode: FeatureMode, cfg: &EvalConfig) -> Result<Vec<ObjectFeatures>> {
    let ranges = FeatureRanges::from_clouds(ds.objects());
    ds.objects()
        .par_iter()
        .map(|c| object_4features(c, mode, &ranges, cfg))
        .collect()
}

/// Rows and columns follow [`LabeledDataset::category_order`].
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    /// Dataset index of each row.
    pub order: Vec<usize>,
    /// Category of each row.
    pub labels: Vec<String>,
    pub values: Vec<f64>,
    pub strategy: Strategy,
    pub mode: FeatureMode,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }

    /// Header `object_id,category,<object ids...>`, then one row per object.
    pub fn to_csv(&self) -> String {
        let n = self.len();
        let mut out = String::from("object_id,category");
        for id in &self.order {
            out.push_str(&format!(",{id}"));
        }
        out.push('\n');
        for i in 0..n {
            out.push_str(&format!("{},{}", self.order[i], self.labels[i]));
            for j in 0..n {
                out.push(',');
                out.push_str(&format_sig9(self.get(i, j)));
            }
            out.push('\n');
        }
        out
    }

    /// Linear gray mapping, smallest value white and largest black.
    pub fn heatmap(&self) -> GrayImage {
        GrayImage::heatmap(self.len(), self.len(), &self.values)
    }
}

pub fn matrix_from_features(
    ds: &LabeledDataset,
    features: &[ObjectFeatures],
    strategy: Strategy,
    mode: FeatureMode,
    metric: HistogramMetric,
) -> Result<DistanceMatrix> {
    if features.len() != ds.len() {
        return Err(Error::DimensionMismatch {
            expected: ds.len(),
            got: features.len(),
        });
    }
    let order = ds.category_order();
    let n = order.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| match i.cmp(&j) {
                    std::cmp::Ordering::Equal => Ok(0.0),
                    _ => {
                        let (a, b) = (order[i.min(j)], order[i.max(j)]);
                        pairwise_distance(&features[a], &features[b], strategy, metric)
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(DistanceMatrix {
        labels: order.iter().map(|&i| ds.labels()[i].clone()).collect(),
        order,
        values: rows.concat(),
        strategy,
        mode,
    })
}

pub fn distance_matrix(
    ds: &LabeledDataset,
    strategy: Strategy,
    mode: FeatureMode,
    cfg: &EvalConfig,
) -> Result<DistanceMatrix> {
    if ds.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: ds.len() });
    }
    let features = dataset_features(ds, mode, cfg)?;
    matrix_from_features(ds, &features, strategy, mode, cfg.metric)
}

/// Population mean and variance; `None` for an empty sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub var: f64,
}

fn moments(values: &[f64]) -> Option<Moments> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(Moments { mean, var })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryStats {
    pub category: String,
    /// Over unordered same-category pairs; `None` for a singleton category.
    pub within: Option<Moments>,
    /// Over pairs with one object in the category and one outside; `None`
    /// when the dataset has a single category.
    pub across: Option<Moments>,
    /// `within.mean / across.mean` when both exist and the denominator is
    /// positive.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub strategy: Strategy,
    pub mode: FeatureMode,
    pub categories: Vec<CategoryStats>,
}

pub fn group_stats(m: &DistanceMatrix) -> GroupStats {
    let cats: BTreeSet<&String> = m.labels.iter().collect();
    let n = m.len();
    let categories = cats
        .into_iter()
        .map(|c| {
            let (mut within, mut across) = (Vec::new(), Vec::new());
            for i in 0..n {
                for j in i + 1..n {
                    match (&m.labels[i] == c, &m.labels[j] == c) {
                        (true, true) => within.push(m.get(i, j)),
                        (true, false) | (false, true) => across.push(m.get(i, j)),
                        _ => {}
                    }
                }
            }
            let within = moments(&within);
            let across = moments(&across);
            let ratio = match (within, across) {
                (Some(w), Some(a)) if a.mean > 0.0 => Some(w.mean / a.mean),
                _ => None,
            };
            CategoryStats {
                category: c.clone(),
                within,
                across,
                ratio,
            }
        })
        .collect();
    GroupStats {
        strategy: m.strategy,
        mode: m.mode,
        categories,
    }
}

pub const STATS_HEADER: &str = "category,within_mean,within_var,across_mean,across_var,ratio,strategy,mode\n";
/// Marker for statistics that are undefined for the data.
pub const UNDEFINED: &str = "NA";

impl GroupStats {
    /// Rows without the header; see [`STATS_HEADER`].
    pub fn csv_rows(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| UNDEFINED.to_string(), format_sig9);
        let mut out = String::new();
        for c in &self.categories {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                c.category,
                opt(c.within.map(|m| m.mean)),
                opt(c.within.map(|m| m.var)),
                opt(c.across.map(|m| m.mean)),
                opt(c.across.map(|m| m.var)),
                opt(c.ratio),
                self.strategy,
                self.mode
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{STATS_HEADER}{}", self.csv_rows())
    }
}
