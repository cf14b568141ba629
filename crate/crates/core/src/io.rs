//! Point-cloud files, dataset manifests and grayscale image export.
//!
//! xyz-ascii: one `x y z` triple per line separated by whitespace; blank lines
//! and lines starting with `#` are skipped. Written with nine significant
//! digits.
//!
//! ply-ascii (read only): `format ascii 1.0` with an `element vertex N`
//! carrying at least `x`, `y`, `z` properties. Other elements are ignored.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    XyzAscii,
    PlyAscii,
}

impl CloudFormat {
    /// Guesses the format from the file extension; anything other than
    /// `.ply` is treated as xyz-ascii.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("ply") => CloudFormat::PlyAscii,
            _ => CloudFormat::XyzAscii,
        }
    }
}

pub fn load_cloud(path: impl AsRef<Path>, format: CloudFormat) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        CloudFormat::XyzAscii => parse_xyz(&text),
        CloudFormat::PlyAscii => parse_ply(&text),
    }
}

/// Loads a cloud, picking the format from the extension.
pub fn load_cloud_auto(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    load_cloud(path, CloudFormat::from_path(path))
}

pub fn parse_xyz(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        points.push(parse_triple(line, i + 1)?);
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    PointCloud::new(points)
}

fn parse_triple(line: &str, line_no: usize) -> Result<Point> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    if tokens.len() != 3 {
        return Err(Error::Parse {
            line: line_no,
            token: line.to_string(),
            message: format!("expected 3 fields, found {}", tokens.len()),
        });
    }
    let mut xyz = [0.0; 3];
    for (slot, tok) in xyz.iter_mut().zip(&tokens) {
        *slot = parse_number(tok, line_no)?;
    }
    Ok(Point::new(xyz[0], xyz[1], xyz[2]))
}

fn parse_number(tok: &str, line_no: usize) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| Error::Parse {
        line: line_no,
        token: tok.to_string(),
        message: "not a number".into(),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line: line_no,
            token: tok.to_string(),
            message: "non-finite coordinate".into(),
        });
    }
    Ok(v)
}

pub fn parse_ply(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, token: &str, message: &str| Error::Parse {
        line,
        token: token.to_string(),
        message: message.to_string(),
    };

    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        Some((i, l)) => return Err(bad(i + 1, l, "missing `ply` magic")),
        None => return Err(bad(1, "", "empty file")),
    }

    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut props: Vec<String> = Vec::new();
    let mut elements_before_vertex = false;
    let mut header_done = false;
    for (i, line) in lines.by_ref() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(bad(i + 1, line, "only ascii ply is supported"));
                }
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = tok.next().unwrap_or("");
                let count = tok.next().unwrap_or("");
                in_vertex = name == "vertex";
                if in_vertex {
                    vertex_count = Some(
                        count
                            .parse::<usize>()
                            .map_err(|_| bad(i + 1, count, "bad vertex count"))?,
                    );
                } else if vertex_count.is_none() {
                    elements_before_vertex = true;
                }
            }
            Some("property") => {
                if in_vertex {
                    let name = tok.last().unwrap_or("");
                    props.push(name.to_string());
                }
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            Some(other) => return Err(bad(i + 1, other, "unknown header keyword")),
        }
    }
    if !header_done {
        return Err(bad(0, "", "missing end_header"));
    }
    if elements_before_vertex {
        return Err(bad(0, "", "vertex must be the first element"));
    }
    let n = vertex_count.ok_or_else(|| bad(0, "", "no vertex element"))?;
    let idx = |name: &str| {
        props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| bad(0, name, "missing vertex property"))
    };
    let (ix, iy, iz) = (idx("x")?, idx("y")?, idx("z")?);

    let mut points = Vec::with_capacity(n);
    for (i, line) in lines {
        if points.len() == n {
            break;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() != props.len() {
            return Err(bad(
                i + 1,
                line,
                &format!("expected {} fields, found {}", props.len(), tokens.len()),
            ));
        }
        points.push(Point::new(
            parse_number(tokens[ix], i + 1)?,
            parse_number(tokens[iy], i + 1)?,
            parse_number(tokens[iz], i + 1)?,
        ));
    }
    if points.len() != n {
        return Err(bad(0, "", &format!("expected {n} vertices, found {}", points.len())));
    }
    PointCloud::new(points)
}

/// Formats `v` with nine significant digits: fixed notation for moderate
/// magnitudes, exponent notation otherwise.
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0.00000000".to_string();
    }
    let sci = format!("{v:.8e}");
    let exp: i32 = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .unwrap_or(0);
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        sci
    }
}

pub fn save_cloud(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in cloud.points() {
        writeln!(
            w,
            "{} {} {}",
            format_sig9(p.x),
            format_sig9(p.y),
            format_sig9(p.z)
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row of a dataset manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub category: String,
}

/// Reads a `file_path,category` CSV. A header row starting with `file_path`
/// is optional; relative paths resolve against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("file_path")) {
            continue;
        }
        let (file, category) = line.split_once(',').ok_or_else(|| Error::Parse {
            line: i + 1,
            token: line.to_string(),
            message: "expected `file_path,category`".into(),
        })?;
        let file = PathBuf::from(file.trim());
        entries.push(ManifestEntry {
            path: if file.is_absolute() { file } else { base.join(file) },
            category: category.trim().to_string(),
        });
    }
    Ok(entries)
}

pub fn save_manifest(entries: &[ManifestEntry], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("file_path,category\n");
    for e in entries {
        out.push_str(&format!("{},{}\n", e.path.display(), e.category));
    }
    write_text(path, &out)
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// An 8-bit grayscale image written as binary PGM (P5).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Maps `values` (row-major, `width * height`) linearly so that the
    /// minimum is white and the maximum is black.
    pub fn heatmap(width: usize, height: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), width * height);
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let span = hi - lo;
        let pixels = values
            .iter()
            .map(|&v| {
                let t = if span > 0.0 { (v - lo) / span } else { 0.0 };
                (255.0 * (1.0 - t)).round() as u8
            })
            .collect();
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_pgm_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Parses a binary PGM produced by [`GrayImage::save_pgm`].
pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Parse {
        line: 0,
        token: String::new(),
        message: m.to_string(),
    };
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).to_string());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM"));
    }
    let width: usize = fields[1].parse().map_err(|_| bad("bad width"))?;
    let height: usize = fields[2].parse().map_err(|_| bad("bad height"))?;
    let pixels = bytes.get(pos..pos + width * height).ok_or_else(|| bad("truncated PGM data"))?;
    Ok(GrayImage {
        width,
        height,
        pixels: pixels.to_vec(),
    })
}
