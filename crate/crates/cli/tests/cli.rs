mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use common::{column, feature_masses, lidarshape, ok, p, read_csv, snapshot};
use lidarshape::io::{load_cloud_auto, read_pgm, save_cloud};
use lidarshape::{Point, PointCloud, Transform4Dof};
use tempfile::TempDir;

fn synth_dataset(dir: &Path, classes: &str, per_class: usize) {
    ok(&["synth", "dataset", "--classes", classes, "--per-class", &per_class.to_string(), "-o", p(dir)]);
}

#[test]
fn features_single_cloud_writes_one_csv() {
    let tmp = TempDir::new().unwrap();
    let ds = tmp.path().join("ds");
    synth_dataset(&ds, "box", 1);
    let out = tmp.path().join("f");
    ok(&["features", p(&ds.join("obj_0000_box.xyz")), "-o", p(&out)]);
    let files: Vec<_> = fs::read_dir(&out).unwrap().collect();
    assert_eq!(files.len(), 1);
    let masses = feature_masses(&out.join("obj_0000_box_hsd.csv"));
    assert_eq!(masses.keys().cloned().collect::<Vec<_>>(), ["A3", "D2", "R3", "T3"]);
    for m in masses.values() {
        assert_eq!(m.len(), 64);
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn missing_input_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    let out = lidarshape(&["features", p(&tmp.path().join("absent.xyz")), "-o", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("io error"));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(lidarshape(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(lidarshape(&["--set", "colour=red", "--print-config"]).status.code(), Some(2));
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "unknown.key = 1\n").unwrap();
    assert_eq!(lidarshape(&["--config", p(&cfg), "--print-config"]).status.code(), Some(2));
}

#[test]
fn flags_override_config_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "seed = 5\nhsd.level = 2\nroi.k = 4\n").unwrap();
    let out = ok(&["--config", p(&cfg), "--seed", "9", "--set", "roi.k=none", "--print-config"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\nseed = 9\n"));
    assert!(text.contains("\nhsd.level = 2\n"));
    assert!(text.contains("\nroi.k = none\n"));
}

#[test]
fn exact_and_hsd_features_agree_on_a_fixture() {
    let tmp = TempDir::new().unwrap();
    let ds = tmp.path().join("ds");
    synth_dataset(&ds, "box", 1);
    let cloud = ds.join("obj_0000_box.xyz");
    let out = tmp.path().join("f");
    for mode in ["exact", "hsd"] {
        ok(&["--set", "sd.sample_budget=5000000", "features", p(&cloud), "--mode", mode, "-o", p(&out)]);
    }
    let exact = feature_masses(&out.join("obj_0000_box_exact.csv"));
    let approx = feature_masses(&out.join("obj_0000_box_hsd.csv"));
    for (kind, e) in &exact {
        let l1: f64 = e.iter().zip(&approx[kind]).map(|(a, b)| (a - b).abs()).sum();
        assert!(l1 <= 0.15, "{kind}: {l1}");
    }
}

#[test]
fn roi_flat_ground_gives_header_only_csv() {
    let tmp = TempDir::new().unwrap();
    let pts: Vec<Point> = (0..400)
        .map(|i| Point::new((i % 20) as f64 * 0.25, (i / 20) as f64 * 0.25, 0.0))
        .collect();
    let scene = tmp.path().join("flat.xyz");
    save_cloud(&PointCloud::new(pts).unwrap(), &scene).unwrap();
    let out = tmp.path().join("roi");
    ok(&["roi", p(&scene), "-o", p(&out)]);
    let text = fs::read_to_string(out.join("roi.csv")).unwrap();
    assert_eq!(text, "tile_x,tile_y,center_x,center_y,point_count,max_height,kept_by_stage\n");
    let mask = read_pgm(out.join("roi_mask.pgm")).unwrap();
    assert_eq!(mask.pixels.len(), 5 * 5);
}

#[test]
fn roi_keeps_planted_tiles_and_mask_matches_grid() {
    let tmp = TempDir::new().unwrap();
    let sc = tmp.path().join("scene");
    ok(&["--seed", "3", "synth", "scene", "-o", p(&sc)]);
    let out = tmp.path().join("roi");
    ok(&["roi", p(&sc.join("scene.xyz")), "--positives", p(&sc.join("planted_tiles.csv")), "--class", "car", "-o", p(&out)]);

    let (h, rows) = read_csv(&out.join("roi.csv"));
    let (tx, ty, stage) = (column(&h, "tile_x"), column(&h, "tile_y"), column(&h, "kept_by_stage"));
    let kept: BTreeSet<(String, String)> = rows.iter().map(|r| (r[tx].clone(), r[ty].clone())).collect();
    let (ph, planted) = read_csv(&sc.join("planted_tiles.csv"));
    let (px, py, pc) = (column(&ph, "tile_x"), column(&ph, "tile_y"), column(&ph, "class"));
    assert!(!planted.is_empty());
    for r in &planted {
        assert!(kept.contains(&(r[px].clone(), r[py].clone())), "planted tile {r:?} missing");
    }
    let refined: BTreeSet<(String, String)> = rows
        .iter()
        .filter(|r| r[stage] == "refined")
        .map(|r| (r[tx].clone(), r[ty].clone()))
        .collect();
    for r in planted.iter().filter(|r| r[pc] == "car") {
        assert!(refined.contains(&(r[px].clone(), r[py].clone())));
    }

    let cloud = load_cloud_auto(sc.join("scene.xyz")).unwrap();
    let b = cloud.bounds();
    let (w, hgt) = (
        ((b.max.x - b.min.x).floor() as usize) + 1,
        ((b.max.y - b.min.y).floor() as usize) + 1,
    );
    let mask = read_pgm(out.join("roi_mask.pgm")).unwrap();
    assert_eq!((mask.width, mask.height), (w, hgt));
    assert_eq!(mask.pixels.len(), w * hgt);
}

fn transform_rows(path: &Path) -> Vec<Transform4Dof> {
    let (h, rows) = read_csv(path);
    let c: Vec<usize> = ["tx", "ty", "tz", "theta"].iter().map(|n| column(&h, n)).collect();
    rows.iter()
        .map(|r| {
            let v: Vec<f64> = c.iter().map(|&i| r[i].parse().unwrap()).collect();
            Transform4Dof::new(v[0], v[1], v[2], v[3])
        })
        .collect()
}

#[test]
fn align_identical_pair_gives_identity_rows() {
    let tmp = TempDir::new().unwrap();
    let ds = tmp.path().join("ds");
    synth_dataset(&ds, "box", 1);
    fs::write(ds.join("pair.csv"), "file_path,category\nobj_0000_box.xyz,box\nobj_0000_box.xyz,box\n").unwrap();
    let out = tmp.path().join("al");
    ok(&["align", p(&ds.join("pair.csv")), "-o", p(&out)]);
    let ts = transform_rows(&out.join("transforms.csv"));
    assert_eq!(ts, vec![Transform4Dof::identity(); 2]);
    let (_, merges) = read_csv(&out.join("merges.csv"));
    assert_eq!(merges.len(), 1);
}

#[test]
fn align_recovers_planted_group() {
    let tmp = TempDir::new().unwrap();
    let grp = tmp.path().join("grp");
    ok(&["--seed", "11", "synth", "group", "--copies", "5", "-o", p(&grp)]);
    let out = tmp.path().join("al");
    ok(&["align", p(&grp.join("manifest.csv")), "-o", p(&out)]);
    let found = transform_rows(&out.join("transforms.csv"));
    let truth = transform_rows(&grp.join("truth.csv"));
    assert_eq!(found.len(), 5);
    let (_, merges) = read_csv(&out.join("merges.csv"));
    assert_eq!(merges.len(), 4);
    let d = load_cloud_auto(grp.join("copy_00.xyz")).unwrap().diameter();
    // copy i maps back to the canonical pose, so truth followed by the found
    // transform is the identity
    for (t, f) in truth.iter().zip(&found) {
        let r = t.then(f);
        assert!(r.theta().abs().to_degrees() < 2.0, "{r:?}");
        assert!((r.tx.hypot(r.ty)).hypot(r.tz) < 0.05 * d, "{r:?}");
    }
    let merged = load_cloud_auto(out.join("merged.xyz")).unwrap();
    assert_eq!(merged.len(), 5 * 300);
}

#[test]
fn align_numerical_failure_exits_1_with_partial_log() {
    let tmp = TempDir::new().unwrap();
    let ds = tmp.path().join("ds");
    synth_dataset(&ds, "box", 1);
    let spike = PointCloud::new(vec![Point::new(1.0, 1.0, 1.0); 5]).unwrap();
    save_cloud(&spike, ds.join("spike.xyz")).unwrap();
    fs::write(
        ds.join("bad.csv"),
        "obj_0000_box.xyz,box\nobj_0000_box.xyz,box\nspike.xyz,spike\n",
    )
    .unwrap();
    let out = tmp.path().join("al");
    let res = lidarshape(&["align", p(&ds.join("bad.csv")), "-o", p(&out)]);
    assert_eq!(res.status.code(), Some(1), "{}", String::from_utf8_lossy(&res.stderr));
    let (_, merges) = read_csv(&out.join("merges.csv"));
    assert_eq!(merges.len(), 1);
}

#[test]
fn eval_three_classes_separate_and_rerun_identically() {
    let tmp = TempDir::new().unwrap();
    let ds = tmp.path().join("ds");
    synth_dataset(&ds, "sphere,cylinder,box", 8);
    let run = |dir: &Path| ok(&["eval", p(&ds.join("manifest.csv")), "--mode", "hsd", "-o", p(dir)]);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(&a);
    run(&b);
    let snap = snapshot(&a);
    assert_eq!(snap, snapshot(&b));
    let matrices = snap.keys().filter(|k| k.starts_with("matrix_")).count();
    let heatmaps = snap.keys().filter(|k| k.starts_with("heatmap_")).count();
    assert_eq!((matrices, heatmaps), (3, 3));

    let (h, rows) = read_csv(&a.join("stats.csv"));
    assert_eq!(rows.len(), 3 * 3);
    let ratio = column(&h, "ratio");
    for r in &rows {
        assert!(r[ratio].parse::<f64>().unwrap() < 1.0, "{r:?}");
    }
    let (mh, mrows) = read_csv(&a.join("matrix_hsd_average.csv"));
    assert_eq!(mh.len(), 2 + 24);
    assert_eq!(mrows.len(), 24);
}

#[test]
fn eval_single_strategy_emits_one_matrix() {
    let tmp = TempDir::new().unwrap();
    let ds = tmp.path().join("ds");
    synth_dataset(&ds, "sphere,box", 3);
    let out = tmp.path().join("e");
    ok(&["eval", p(&ds.join("manifest.csv")), "--mode", "hsd", "--strategy", "biggest", "-o", p(&out)]);
    let names: Vec<String> = snapshot(&out).into_keys().collect();
    assert_eq!(names, ["heatmap_hsd_biggest.pgm", "matrix_hsd_biggest.csv", "stats.csv"]);
}

#[test]
fn spin_train_encode_and_cluster() {
    let tmp = TempDir::new().unwrap();
    let ds = tmp.path().join("ds");
    synth_dataset(&ds, "cylinder", 1);
    let cloud = ds.join("obj_0000_cylinder.xyz");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["spin", p(&cloud), "--train", "-o", p(&a)]);
    assert!(a.join("codebook.csv").exists());
    ok(&["spin", p(&cloud), "--codebook", p(&a.join("codebook.csv")), "-o", p(&b)]);
    let labels = fs::read(a.join("labels.csv")).unwrap();
    assert_eq!(labels, fs::read(b.join("labels.csv")).unwrap());
    let (_, rows) = read_csv(&a.join("labels.csv"));
    assert_eq!(rows.len(), 300);
    let distinct: BTreeSet<&String> = rows.iter().map(|r| &r[1]).collect();
    assert_eq!(distinct.len(), 5);
    let (ch, _) = read_csv(&a.join("codes.csv"));
    assert_eq!(ch.len(), 31);
    assert_eq!(snapshot(&a).keys().filter(|k| k.ends_with(".pgm")).count(), 4);
}

#[test]
fn spin_rejects_codebook_of_wrong_dimension() {
    let tmp = TempDir::new().unwrap();
    let ds = tmp.path().join("ds");
    synth_dataset(&ds, "box", 1);
    let cloud = ds.join("obj_0000_box.xyz");
    let a = tmp.path().join("a");
    ok(&["--set", "spin.codebook=patch-11x11", "spin", p(&cloud), "--train", "-o", p(&a)]);
    let text = fs::read_to_string(a.join("codebook.csv")).unwrap();
    let forged = text.replacen("patch-11x11,", "whole-image,", 1);
    let cb = tmp.path().join("forged.csv");
    fs::write(&cb, forged).unwrap();
    let res = lidarshape(&["spin", p(&cloud), "--codebook", p(&cb), "-o", p(&tmp.path().join("b"))]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("dimension mismatch"));
}

#[test]
fn spin_needs_a_codebook_source() {
    let tmp = TempDir::new().unwrap();
    let res = lidarshape(&["spin", "cloud.xyz", "-o", p(tmp.path())]);
    assert_eq!(res.status.code(), Some(2));
}
