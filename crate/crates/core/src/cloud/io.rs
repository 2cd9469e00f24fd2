use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use super::{Point3, PointCloud};
use crate::error::{GqaError, Result};

/// On-disk point-cloud encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    /// ASCII PLY with `x y z` and optional `nx ny nz` vertex properties.
    PlyAscii,
    /// Whitespace-separated `x y z [nx ny nz]` rows, `#` comments.
    Xyz,
}

impl CloudFormat {
    /// Picks the format from a file extension (`.ply` or `.xyz`/`.txt`).
    pub fn from_path(path: &Path) -> Option<CloudFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "ply" => Some(CloudFormat::PlyAscii),
            "xyz" | "txt" => Some(CloudFormat::Xyz),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            CloudFormat::PlyAscii => "ply",
            CloudFormat::Xyz => "xyz",
        }
    }
}

impl FromStr for CloudFormat {
    type Err = GqaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ply" | "ply-ascii" => Ok(CloudFormat::PlyAscii),
            "xyz" => Ok(CloudFormat::Xyz),
            other => Err(GqaError::Config(format!("unknown cloud format {other:?}"))),
        }
    }
}

pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let text = fs::read_to_string(path).map_err(|e| GqaError::io(path, e))?;
    let rows = match format {
        CloudFormat::Xyz => parse_xyz(&text, path)?,
        CloudFormat::PlyAscii => parse_ply(&text, path)?,
    };
    build(rows, path)
}

pub fn save_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    let mut out = String::with_capacity(cloud.len() * 64);
    let normals = cloud.normals();
    if format == CloudFormat::PlyAscii {
        out.push_str("ply\nformat ascii 1.0\n");
        let _ = writeln!(out, "element vertex {}", cloud.len());
        out.push_str("property float x\nproperty float y\nproperty float z\n");
        if normals.is_some() {
            out.push_str("property float nx\nproperty float ny\nproperty float nz\n");
        }
        out.push_str("end_header\n");
    }
    for (i, p) in cloud.points().iter().enumerate() {
        // `{}` prints the shortest representation that parses back to the same f64
        let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
        if let Some(ns) = normals {
            let n = ns[i];
            let _ = write!(out, " {} {} {}", n.x, n.y, n.z);
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| GqaError::io(path, e))
}

struct Row {
    line: usize,
    point: Point3,
    normal: Option<Point3>,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> GqaError {
    GqaError::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

fn parse_numbers(s: &str, path: &Path, line: usize) -> Result<Vec<f64>> {
    s.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(path, line, format!("invalid number {tok:?}")))
        })
        .collect()
}

fn parse_xyz(text: &str, path: &Path) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let v = parse_numbers(content, path, line)?;
        let row = match v.len() {
            3 => Row { line, point: Point3::new(v[0], v[1], v[2]), normal: None },
            6 => Row { line, point: Point3::new(v[0], v[1], v[2]), normal: Some(Point3::new(v[3], v[4], v[5])) },
            n => return Err(parse_err(path, line, format!("expected 3 or 6 values, found {n}"))),
        };
        rows.push(row);
    }
    Ok(rows)
}

struct PlyElement {
    name: String,
    count: usize,
    props: Vec<String>,
}

fn parse_ply(text: &str, path: &Path) -> Result<Vec<Row>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(parse_err(path, 1, "missing 'ply' magic")),
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut saw_format = false;
    let mut header_done = false;
    for (line, l) in lines.by_ref() {
        let toks: Vec<&str> = l.split_whitespace().collect();
        match toks.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", _] => saw_format = true,
            ["format", other, ..] => return Err(parse_err(path, line, format!("unsupported PLY format {other:?}"))),
            ["element", name, count] => {
                let count = count.parse().map_err(|_| parse_err(path, line, "invalid element count"))?;
                elements.push(PlyElement { name: name.to_string(), count, props: Vec::new() });
            }
            ["property", "list", ..] => {
                let el = elements.last_mut().ok_or_else(|| parse_err(path, line, "property before element"))?;
                el.props.push("<list>".into());
            }
            ["property", _ty, name] => {
                let el = elements.last_mut().ok_or_else(|| parse_err(path, line, "property before element"))?;
                el.props.push(name.to_string());
            }
            ["end_header"] => {
                header_done = true;
                break;
            }
            _ => return Err(parse_err(path, line, format!("unexpected header line {l:?}"))),
        }
    }
    if !saw_format || !header_done {
        return Err(parse_err(path, 1, "incomplete PLY header"));
    }
    let mut rows = Vec::new();
    for el in &elements {
        let is_vertex = el.name == "vertex";
        let pos = |n: &str| el.props.iter().position(|p| p == n);
        let xyz = [pos("x"), pos("y"), pos("z")];
        let nxyz = [pos("nx"), pos("ny"), pos("nz")];
        if is_vertex && xyz.iter().any(Option::is_none) {
            return Err(parse_err(path, 1, "vertex element lacks x/y/z properties"));
        }
        let has_normals = nxyz.iter().all(Option::is_some);
        let mut read = 0;
        while read < el.count {
            let (line, l) = lines.next().ok_or_else(|| parse_err(path, 0, "unexpected end of file"))?;
            if l.is_empty() {
                continue;
            }
            read += 1;
            if !is_vertex {
                continue;
            }
            let v = parse_numbers(l, path, line)?;
            if v.len() < el.props.len() {
                return Err(parse_err(path, line, format!("expected {} values, found {}", el.props.len(), v.len())));
            }
            let get = |i: Option<usize>| v[i.expect("checked")];
            let point = Point3::new(get(xyz[0]), get(xyz[1]), get(xyz[2]));
            let normal = has_normals.then(|| Point3::new(get(nxyz[0]), get(nxyz[1]), get(nxyz[2])));
            rows.push(Row { line, point, normal });
        }
    }
    Ok(rows)
}

fn build(rows: Vec<Row>, path: &Path) -> Result<PointCloud> {
    if rows.is_empty() {
        return Err(GqaError::EmptyCloud);
    }
    let with_normals = rows.iter().filter(|r| r.normal.is_some()).count();
    if with_normals != 0 && with_normals != rows.len() {
        return Err(parse_err(path, rows[0].line, "normals present on some rows only"));
    }
    let mut points = Vec::with_capacity(rows.len());
    let mut normals = Vec::with_capacity(with_normals);
    for r in rows {
        points.push(r.point);
        if let Some(n) = r.normal {
            normals.push(n.normalized().ok_or_else(|| parse_err(path, r.line, "zero-length normal"))?);
        }
    }
    if normals.is_empty() {
        PointCloud::new(points)
    } else {
        PointCloud::with_normals(points, normals)
    }
}
