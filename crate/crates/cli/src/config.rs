//! Run configuration: plain `key = value` text, one entry per line, `#`
//! starts a comment. Unknown keys are rejected.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use lidarshape::alignment::IcpConfig;
use lidarshape::eval::{EvalConfig, FeatureMode, HistogramMetric, Strategy};
use lidarshape::roi::{Acceptance, BasicFilter};
use lidarshape::shape_dist::RangeMode;
use lidarshape::spin::{AxisMode, CodebookKind};
use lidarshape::{Error, OctreeConfig, Result, SDConfig};

/// Offsets added to the run seed for each randomized stage.
pub mod seed_offset {
    pub const SHAPE_SAMPLING: u64 = 1;
    pub const SYNTH: u64 = 2;
    pub const PART_CLUSTERING: u64 = 3;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeSelection {
    One(FeatureMode),
    Both,
}

impl ModeSelection {
    pub fn modes(self) -> Vec<FeatureMode> {
        match self {
            ModeSelection::One(m) => vec![m],
            ModeSelection::Both => FeatureMode::ALL.to_vec(),
        }
    }
}

impl FromStr for ModeSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(ModeSelection::Both),
            _ => s.parse().map(ModeSelection::One),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategySelection {
    One(Strategy),
    All,
}

impl StrategySelection {
    pub fn strategies(self) -> Vec<Strategy> {
        match self {
            StrategySelection::One(s) => vec![s],
            StrategySelection::All => Strategy::ALL.to_vec(),
        }
    }
}

impl FromStr for StrategySelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(StrategySelection::All),
            _ => s.parse().map(StrategySelection::One),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub octree: OctreeConfig,
    pub sd_bins: usize,
    pub sd_sample_budget: u64,
    pub hsd_level: usize,
    pub feature_mode: ModeSelection,
    pub strategy: StrategySelection,
    pub metric: HistogramMetric,
    pub icp: IcpConfig,
    pub tile_size: f64,
    pub basic: BasicFilter,
    pub roi_tau: f64,
    /// When set, refinement keeps the K nearest candidates instead of
    /// thresholding.
    pub roi_k: Option<usize>,
    pub spin_axis: AxisMode,
    pub spin_codebook: CodebookKind,
    /// `None` uses half the cloud diameter.
    pub spin_support_radius: Option<f64>,
    pub spin_k: usize,
    pub spin_train_images: usize,
    pub spin_pgm_count: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let basic = BasicFilter::default();
        Self {
            seed: 0,
            octree: OctreeConfig::default(),
            sd_bins: 64,
            sd_sample_budget: 200_000,
            hsd_level: 3,
            feature_mode: ModeSelection::One(FeatureMode::Hsd),
            strategy: StrategySelection::All,
            metric: HistogramMetric::Emd,
            icp: IcpConfig::default(),
            tile_size: 1.0,
            basic,
            roi_tau: 2.0,
            roi_k: None,
            spin_axis: AxisMode::GlobalZ,
            spin_codebook: CodebookKind::WholeImage,
            spin_support_radius: None,
            spin_k: 5,
            spin_train_images: 64,
            spin_pgm_count: 4,
        }
    }
}

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "run seed; stage seeds are derived from it by fixed offsets"),
    ("octree.max_depth", "maximum octree depth"),
    ("octree.leaf_capacity", "points per leaf before splitting"),
    ("octree.reps_per_node", "representative points per node"),
    ("sd.bins", "shape distribution histogram bins"),
    ("sd.sample_budget", "tuple budget before exact enumeration switches to sampling"),
    ("hsd.level", "octree level used for hierarchical shape distributions"),
    ("feature.mode", "exact, hsd or both"),
    ("strategy", "average, smallest, biggest or all"),
    ("metric", "histogram distance: emd or l1"),
    ("icp.max_iters", "ICP iteration cap"),
    ("icp.rms_tol", "ICP convergence tolerance, or auto (1e-5 x target diameter)"),
    ("icp.trim_fraction", "fraction of worst correspondences dropped per iteration"),
    ("tile.size", "ROI tile side in meters"),
    ("tile.min_points", "basic filter: minimum points per tile"),
    ("tile.height_lo", "basic filter: lowest accepted max height"),
    ("tile.height_hi", "basic filter: highest accepted max height"),
    ("roi.tau", "refinement threshold in normalized units"),
    ("roi.k", "refinement keeps the K nearest tiles instead (none disables)"),
    ("spin.axis", "global-z or local-normal"),
    ("spin.codebook", "whole-image or patch-11x11"),
    ("spin.support_radius", "spin image support radius in meters, or auto"),
    ("spin.k", "part clusters"),
    ("spin.train_images", "spin images used to train a codebook"),
    ("spin.pgm_count", "spin images exported as PGM"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad value `{value}` for `{key}`")))
}

fn parse_optional<T: FromStr>(key: &str, value: &str, none: &str) -> Result<Option<T>> {
    if value == none {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn parse_axis(value: &str) -> Result<AxisMode> {
    match value {
        "global-z" => Ok(AxisMode::GlobalZ),
        "local-normal" => Ok(AxisMode::LocalNormal),
        _ => Err(Error::InvalidConfig(format!("unknown spin axis `{value}`"))),
    }
}

fn axis_name(a: AxisMode) -> &'static str {
    match a {
        AxisMode::GlobalZ => "global-z",
        AxisMode::LocalNormal => "local-normal",
    }
}

fn optional_name<T: ToString>(v: Option<T>, none: &str) -> String {
    v.map_or_else(|| none.to_string(), |v| v.to_string())
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "octree.max_depth" => self.octree.max_depth = parse(key, v)?,
            "octree.leaf_capacity" => self.octree.leaf_capacity = parse(key, v)?,
            "octree.reps_per_node" => self.octree.reps_per_node = parse(key, v)?,
            "sd.bins" => self.sd_bins = parse(key, v)?,
            "sd.sample_budget" => self.sd_sample_budget = parse(key, v)?,
            "hsd.level" => self.hsd_level = parse(key, v)?,
            "feature.mode" => self.feature_mode = v.parse()?,
            "strategy" => self.strategy = v.parse()?,
            "metric" => self.metric = v.parse()?,
            "icp.max_iters" => self.icp.max_iters = parse(key, v)?,
            "icp.rms_tol" => self.icp.rms_tol = parse_optional(key, v, "auto")?,
            "icp.trim_fraction" => self.icp.trim_fraction = parse(key, v)?,
            "tile.size" => self.tile_size = parse(key, v)?,
            "tile.min_points" => self.basic.min_points = parse(key, v)?,
            "tile.height_lo" => self.basic.height_lo = parse(key, v)?,
            "tile.height_hi" => self.basic.height_hi = parse(key, v)?,
            "roi.tau" => self.roi_tau = parse(key, v)?,
            "roi.k" => self.roi_k = parse_optional(key, v, "none")?,
            "spin.axis" => self.spin_axis = parse_axis(v)?,
            "spin.codebook" => self.spin_codebook = v.parse()?,
            "spin.support_radius" => self.spin_support_radius = parse_optional(key, v, "auto")?,
            "spin.k" => self.spin_k = parse(key, v)?,
            "spin.train_images" => self.spin_train_images = parse(key, v)?,
            "spin.pgm_count" => self.spin_pgm_count = parse(key, v)?,
            other => return Err(Error::InvalidConfig(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                token: line.to_string(),
                message: "expected `key = value`".into(),
            })?;
            self.set(k, v).map_err(|e| Error::Parse {
                line: i + 1,
                token: k.trim().to_string(),
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.apply_text(&text)
    }

    /// Applies a `key=value` override given on the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("expected key=value, got `{assignment}`")))?;
        self.set(k, v)
    }

    pub fn validate(&self) -> Result<()> {
        self.octree.validate()?;
        self.sd_config().validate()?;
        self.icp.validate()?;
        if self.hsd_level == 0 {
            return Err(Error::InvalidConfig("hsd.level must be at least 1".into()));
        }
        if !(self.tile_size > 0.0 && self.tile_size.is_finite()) {
            return Err(Error::InvalidConfig("tile.size must be positive".into()));
        }
        if self.roi_tau.is_nan() || self.roi_tau <= 0.0 {
            return Err(Error::InvalidConfig("roi.tau must be positive".into()));
        }
        if self.roi_k == Some(0) {
            return Err(Error::InvalidConfig("roi.k must be at least 1".into()));
        }
        if self.spin_k == 0 {
            return Err(Error::InvalidConfig("spin.k must be at least 1".into()));
        }
        if let Some(r) = self.spin_support_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidConfig("spin.support_radius must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn stage_seed(&self, offset: u64) -> u64 {
        self.seed.wrapping_add(offset)
    }

    pub fn sd_config(&self) -> SDConfig {
        SDConfig {
            bins: self.sd_bins,
            range_mode: RangeMode::Auto,
            exact_sample_budget: self.sd_sample_budget,
            rng_seed: self.stage_seed(seed_offset::SHAPE_SAMPLING),
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            sd: self.sd_config(),
            octree: self.octree,
            hsd_level: self.hsd_level,
            metric: self.metric,
        }
    }

    pub fn acceptance(&self) -> Acceptance {
        match self.roi_k {
            Some(k) => Acceptance::KNearest(k),
            None => Acceptance::Threshold(self.roi_tau),
        }
    }

    /// The effective configuration in the file format.
    pub fn to_text(&self) -> String {
        let mode = match self.feature_mode {
            ModeSelection::One(m) => m.to_string(),
            ModeSelection::Both => "both".into(),
        };
        let strategy = match self.strategy {
            StrategySelection::One(s) => s.to_string(),
            StrategySelection::All => "all".into(),
        };
        let values = [
            self.seed.to_string(),
            self.octree.max_depth.to_string(),
            self.octree.leaf_capacity.to_string(),
            self.octree.reps_per_node.to_string(),
            self.sd_bins.to_string(),
            self.sd_sample_budget.to_string(),
            self.hsd_level.to_string(),
            mode,
            strategy,
            self.metric.to_string(),
            self.icp.max_iters.to_string(),
            optional_name(self.icp.rms_tol, "auto"),
            self.icp.trim_fraction.to_string(),
            self.tile_size.to_string(),
            self.basic.min_points.to_string(),
            self.basic.height_lo.to_string(),
            self.basic.height_hi.to_string(),
            self.roi_tau.to_string(),
            optional_name(self.roi_k, "none"),
            axis_name(self.spin_axis).to_string(),
            self.spin_codebook.to_string(),
            optional_name(self.spin_support_radius, "auto"),
            self.spin_k.to_string(),
            self.spin_train_images.to_string(),
            self.spin_pgm_count.to_string(),
        ];
        let mut out = String::new();
        for ((key, help), value) in KEYS.iter().zip(values) {
            let _ = writeln!(out, "# {help}\n{key} = {value}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let d = RunConfig::default();
        let mut c = RunConfig {
            seed: 99,
            ..RunConfig::default()
        };
        c.apply_text(&d.to_text()).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn every_key_is_settable() {
        let text = RunConfig::default().to_text();
        let keys: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.split('=').next().unwrap().trim())
            .collect();
        assert_eq!(keys, KEYS.iter().map(|k| k.0).collect::<Vec<_>>());
    }

    #[test]
    fn unknown_key_rejected() {
        let mut c = RunConfig::default();
        assert!(matches!(c.apply_text("colour = red"), Err(Error::Parse { line: 1, .. })));
        assert!(c.apply_override("nope=1").is_err());
    }

    #[test]
    fn comments_and_overrides() {
        let mut c = RunConfig::default();
        c.apply_text("# header\nseed = 7 # trailing\n\nroi.k = 3\nicp.rms_tol = 0.01\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.acceptance(), Acceptance::KNearest(3));
        assert_eq!(c.icp.rms_tol, Some(0.01));
        c.apply_override("roi.k=none").unwrap();
        assert_eq!(c.acceptance(), Acceptance::Threshold(2.0));
    }

    #[test]
    fn bad_values_rejected() {
        let mut c = RunConfig::default();
        assert!(c.set("sd.bins", "many").is_err());
        assert!(c.set("feature.mode", "fast").is_err());
        assert!(c.apply_text("just words").is_err());
        c.set("hsd.level", "0").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn stage_seeds_differ() {
        let c = RunConfig::default();
        assert_ne!(c.sd_config().rng_seed, c.stage_seed(seed_offset::PART_CLUSTERING));
    }
}
