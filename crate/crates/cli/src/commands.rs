use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lidarshape::alignment::{align_group_with_similarity, similarity_matrix, GroupAlignment};
use lidarshape::eval::{
    dataset_features, group_stats, matrix_from_features, object_4features, FeatureMode, FeatureRanges,
    LabeledDataset, STATS_HEADER,
};
use lidarshape::io::{format_sig9, load_cloud_auto, load_manifest, save_cloud, save_manifest, write_text, ManifestEntry};
use lidarshape::roi::{
    basic_filter, build_grid, planted_tiles, refine_roi, roi_csv, roi_mask, tile_features, train_class_model,
    TileFeature, TileGrid,
};
use lidarshape::shape_dist::features_to_csv;
use lidarshape::spin::{
    cluster_parts, codes_to_csv, default_support_radius, encode, train_codebook, Codebook, SpinImageGenerator,
};
use lidarshape::synth::{synth_dataset, synth_group, synth_scene, ObjectParams, SceneParams, ShapeClass};
use lidarshape::{Error, PointCloud, Result};
use rayon::prelude::*;

use crate::config::{seed_offset, ModeSelection, RunConfig, StrategySelection};
use crate::{AlignArgs, EvalArgs, FeaturesArgs, RoiArgs, SpinArgs, SynthCommand};

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn is_manifest(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("cloud")
        .to_string()
}

fn single_mode(sel: ModeSelection, what: &str) -> Result<FeatureMode> {
    match sel {
        ModeSelection::One(m) => Ok(m),
        ModeSelection::Both => Err(Error::InvalidConfig(format!("{what} takes a single feature mode"))),
    }
}

pub fn features(cfg: &RunConfig, args: &FeaturesArgs) -> Result<()> {
    let sel = match &args.mode {
        Some(m) => m.parse()?,
        None => cfg.feature_mode,
    };
    let mode = single_mode(sel, "features")?;
    let (clouds, names): (Vec<PointCloud>, Vec<String>) = if is_manifest(&args.input) {
        let entries = load_manifest(&args.input)?;
        if entries.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let clouds = entries.iter().map(|e| load_cloud_auto(&e.path)).collect::<Result<_>>()?;
        let names = entries
            .iter()
            .enumerate()
            .map(|(i, e)| format!("{i:04}_{}", stem(&e.path)))
            .collect();
        (clouds, names)
    } else {
        (vec![load_cloud_auto(&args.input)?], vec![stem(&args.input)])
    };
    create_dir(&args.out)?;
    let ranges = FeatureRanges::from_clouds(&clouds);
    let ecfg = cfg.eval_config();
    let feats = clouds
        .par_iter()
        .map(|c| object_4features(c, mode, &ranges, &ecfg))
        .collect::<Result<Vec<_>>>()?;
    for (name, f) in names.iter().zip(&feats) {
        write_text(args.out.join(format!("{name}_{mode}.csv")), &features_to_csv(f))?;
    }
    Ok(())
}

/// Reads `tile_x,tile_y` pairs from a CSV with a header. Rows with a `class`
/// column different from `class` are skipped.
fn read_positive_tiles(path: &Path, grid: &TileGrid, class: Option<&str>) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = text.lines().enumerate();
    let header: Vec<&str> = lines.next().map_or(Vec::new(), |(_, l)| l.split(',').map(str::trim).collect());
    let col = |name: &str| header.iter().position(|h| *h == name);
    let (cx, cy) = match (col("tile_x"), col("tile_y")) {
        (Some(x), Some(y)) => (x, y),
        _ => {
            return Err(Error::Parse {
                line: 1,
                token: header.join(","),
                message: "expected `tile_x` and `tile_y` columns".into(),
            })
        }
    };
    let cclass = col("class");
    let mut tiles = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if let (Some(want), Some(c)) = (class, cclass) {
            if fields.get(c) != Some(&want) {
                continue;
            }
        }
        let num = |c: usize| -> Result<usize> {
            let tok = fields.get(c).copied().unwrap_or("");
            tok.parse().map_err(|_| Error::Parse {
                line: i + 1,
                token: tok.to_string(),
                message: "expected a tile index".into(),
            })
        };
        let (tx, ty) = (num(cx)?, num(cy)?);
        if tx >= grid.width || ty >= grid.height {
            return Err(Error::InvalidConfig(format!(
                "positive tile ({tx}, {ty}) lies outside the {}x{} grid",
                grid.width, grid.height
            )));
        }
        tiles.push(grid.index(tx, ty));
    }
    tiles.sort_unstable();
    tiles.dedup();
    Ok(tiles)
}

pub fn roi(cfg: &RunConfig, args: &RoiArgs) -> Result<()> {
    let scene = load_cloud_auto(&args.scene)?;
    let grid = build_grid(&scene, cfg.tile_size)?;
    let feats = tile_features(&grid, &scene);
    let basic = basic_filter(&feats, &cfg.basic);
    let refined = match &args.positives {
        Some(path) => {
            let train_feats: Vec<TileFeature>;
            let (tgrid, tfeats) = match &args.train_scene {
                Some(ts) => {
                    let tscene = load_cloud_auto(ts)?;
                    let tgrid = build_grid(&tscene, cfg.tile_size)?;
                    train_feats = tile_features(&tgrid, &tscene);
                    (tgrid, &train_feats)
                }
                None => (grid.clone(), &feats),
            };
            let tiles = read_positive_tiles(path, &tgrid, args.class.as_deref())?;
            let positive: Vec<TileFeature> = tiles.iter().map(|&i| tfeats[i].clone()).collect();
            let class = args.class.as_deref().unwrap_or("positive");
            let model = train_class_model(&positive, class, cfg.acceptance())?;
            refine_roi(&basic, &feats, &model)
        }
        None => Vec::new(),
    };
    create_dir(&args.out)?;
    write_text(args.out.join("roi.csv"), &roi_csv(&grid, &feats, &basic, &refined))?;
    roi_mask(&grid, &feats, &basic, &refined).save_pgm(args.out.join("roi_mask.pgm"))
}

fn write_alignment(out: &Path, g: &GroupAlignment, objects: &[PointCloud]) -> Result<()> {
    write_text(out.join("transforms.csv"), &g.transforms_csv())?;
    write_text(out.join("merges.csv"), &g.merges_csv())?;
    save_cloud(&g.merged_cloud(objects)?, out.join("merged.xyz"))
}

pub fn align(cfg: &RunConfig, args: &AlignArgs) -> Result<()> {
    let entries = load_manifest(&args.manifest)?;
    let objects = entries
        .iter()
        .map(|e| load_cloud_auto(&e.path))
        .collect::<Result<Vec<_>>>()?;
    if objects.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: objects.len(),
        });
    }
    create_dir(&args.out)?;
    let sim = similarity_matrix(&objects, &cfg.sd_config())?;
    write_text(args.out.join("similarity.csv"), &sim.to_csv())?;
    match align_group_with_similarity(&objects, &sim, &cfg.icp) {
        Ok(g) => write_alignment(&args.out, &g, &objects),
        Err(Error::AlignmentAborted { merges, source }) => {
            let partial = GroupAlignment {
                transforms: Vec::new(),
                merges,
            };
            write_text(args.out.join("merges.csv"), &partial.merges_csv())?;
            Err(Error::AlignmentAborted {
                merges: partial.merges,
                source,
            })
        }
        Err(e) => Err(e),
    }
}

pub fn eval(cfg: &RunConfig, args: &EvalArgs) -> Result<()> {
    let modes = match &args.mode {
        Some(m) => m.parse::<ModeSelection>()?,
        None => cfg.feature_mode,
    }
    .modes();
    let strategies = match &args.strategy {
        Some(s) => s.parse::<StrategySelection>()?,
        None => cfg.strategy,
    }
    .strategies();
    let ds = LabeledDataset::from_manifest(&args.manifest)?;
    if ds.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: ds.len() });
    }
    create_dir(&args.out)?;
    let ecfg = cfg.eval_config();
    let mut stats = String::from(STATS_HEADER);
    for mode in modes {
        let feats = dataset_features(&ds, mode, &ecfg)?;
        for &strategy in &strategies {
            let m = matrix_from_features(&ds, &feats, strategy, mode, ecfg.metric)?;
            let name = format!("{mode}_{strategy}");
            write_text(args.out.join(format!("matrix_{name}.csv")), &m.to_csv())?;
            m.heatmap().save_pgm(args.out.join(format!("heatmap_{name}.pgm")))?;
            stats.push_str(&group_stats(&m).csv_rows());
        }
    }
    write_text(args.out.join("stats.csv"), &stats)
}

/// `count` indices spread evenly over `0..n`.
fn spread(n: usize, count: usize) -> Vec<usize> {
    let count = count.min(n);
    (0..count).map(|i| i * n / count).collect()
}

pub fn spin(cfg: &RunConfig, args: &SpinArgs) -> Result<()> {
    let cloud = load_cloud_auto(&args.cloud)?;
    let k = args.k.unwrap_or(cfg.spin_k);
    let radius = cfg.spin_support_radius.unwrap_or_else(|| default_support_radius(&cloud));
    let generator = SpinImageGenerator::new(&cloud, cfg.spin_axis, radius)?;
    let images = generator.compute_all();
    create_dir(&args.out)?;

    let codebook = if args.train {
        let usable: Vec<usize> = (0..images.len()).filter(|&i| !images[i].is_empty()).collect();
        let training: Vec<_> = spread(usable.len(), cfg.spin_train_images)
            .into_iter()
            .map(|i| images[usable[i]].clone())
            .collect();
        let cb = train_codebook(&training, cfg.spin_codebook)?;
        cb.save(args.out.join("codebook.csv"))?;
        cb
    } else {
        let path = args.codebook.as_ref().expect("clap requires a codebook without --train");
        Codebook::load(path)?
    };

    let codes = images
        .par_iter()
        .map(|img| encode(img, &codebook))
        .collect::<Result<Vec<_>>>()?;
    write_text(args.out.join("codes.csv"), &codes_to_csv(&codes))?;
    let labels = cluster_parts(&codes, k, cfg.stage_seed(seed_offset::PART_CLUSTERING))?;
    write_text(args.out.join("labels.csv"), &labels.to_csv())?;
    for i in spread(images.len(), cfg.spin_pgm_count) {
        images[i].to_gray().save_pgm(args.out.join(format!("spin_{i:05}.pgm")))?;
    }
    Ok(())
}

fn parse_classes(list: &str) -> Result<Vec<ShapeClass>> {
    list.split(',').map(|s| s.trim().parse()).collect()
}

fn manifest_entries(files: &[(String, String)]) -> Vec<ManifestEntry> {
    files
        .iter()
        .map(|(f, c)| ManifestEntry {
            path: PathBuf::from(f),
            category: c.clone(),
        })
        .collect()
}

pub fn synth(cfg: &RunConfig, cmd: &SynthCommand) -> Result<()> {
    let seed = cfg.stage_seed(seed_offset::SYNTH);
    match cmd {
        SynthCommand::Dataset {
            classes,
            per_class,
            points,
            out,
        } => {
            let classes = parse_classes(classes)?;
            let params = ObjectParams {
                points: *points,
                ..ObjectParams::default()
            };
            create_dir(out)?;
            let mut files = Vec::new();
            for (i, (cloud, label)) in synth_dataset(&classes, *per_class, &params, seed).into_iter().enumerate() {
                let name = format!("obj_{i:04}_{label}.xyz");
                save_cloud(&cloud, out.join(&name))?;
                files.push((name, label));
            }
            save_manifest(&manifest_entries(&files), out.join("manifest.csv"))
        }
        SynthCommand::Group {
            class,
            copies,
            points,
            max_shift,
            max_yaw,
            out,
        } => {
            let class: ShapeClass = class.parse()?;
            let params = ObjectParams {
                points: *points,
                ..ObjectParams::default()
            };
            create_dir(out)?;
            let group = synth_group(class, &params, *copies, *max_shift, max_yaw.to_radians(), seed);
            let mut files = Vec::new();
            let mut truth = String::from("object_id,tx,ty,tz,theta\n");
            for (i, (cloud, t)) in group.iter().enumerate() {
                let name = format!("copy_{i:02}.xyz");
                save_cloud(cloud, out.join(&name))?;
                files.push((name, class.name().to_string()));
                let _ = writeln!(
                    truth,
                    "{i},{},{},{},{}",
                    format_sig9(t.tx),
                    format_sig9(t.ty),
                    format_sig9(t.tz),
                    format_sig9(t.theta())
                );
            }
            write_text(out.join("truth.csv"), &truth)?;
            save_manifest(&manifest_entries(&files), out.join("manifest.csv"))
        }
        SynthCommand::Scene { objects, extent, out } => {
            let mut params = SceneParams {
                extent: *extent,
                ..SceneParams::default()
            };
            if let Some(list) = objects {
                params.objects = parse_classes(list)?;
            }
            if params.extent.is_nan() || params.extent <= 6.0 {
                return Err(Error::InvalidConfig("scene extent must exceed 6 m".into()));
            }
            let scene = synth_scene(&params, seed);
            create_dir(out)?;
            save_cloud(&scene.cloud, out.join("scene.xyz"))?;
            let mut table = String::from("object_id,class,x,y,theta,first_point,end_point\n");
            for (i, o) in scene.objects.iter().enumerate() {
                let _ = writeln!(
                    table,
                    "{i},{},{},{},{},{},{}",
                    o.class,
                    format_sig9(o.placement.tx),
                    format_sig9(o.placement.ty),
                    format_sig9(o.placement.theta()),
                    o.points.start,
                    o.points.end
                );
            }
            write_text(out.join("objects.csv"), &table)?;
            let grid = build_grid(&scene.cloud, cfg.tile_size)?;
            let mut tiles = String::from("tile_x,tile_y,object_id,class\n");
            for (i, list) in planted_tiles(&grid, &scene, cfg.basic.min_points).iter().enumerate() {
                for &t in list {
                    let (tx, ty) = grid.coords(t);
                    let _ = writeln!(tiles, "{tx},{ty},{i},{}", scene.objects[i].class);
                }
            }
            write_text(out.join("planted_tiles.csv"), &tiles)
        }
    }
}
