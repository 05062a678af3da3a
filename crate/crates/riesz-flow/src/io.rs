//! Plain-text file formats for geometries, kernels and fields, plus the
//! diagnostics CSV and TOML manifests written by runs.
//!
//! Text files are line oriented: `key value` header lines, then blocks that
//! start with a keyword line and hold one row per node. Blank lines and
//! `#` comments are ignored. Floats are written in their shortest
//! round-trip form, so save/load is exact.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use riesz_flow_core::flow::DiagnosticsRecord;
use riesz_flow_core::kernel::KernelHeader;
use riesz_flow_core::{
    DiagonalRule, DistanceKind, Geometry, GeometryKind, KernelOperator, SphereScheme,
};

use crate::error::{CliError, Result};

const GEOMETRY_MAGIC: &str = "# riesz-flow geometry";
const KERNEL_MAGIC: &str = "# riesz-flow kernel";
const FIELD_MAGIC: &str = "# riesz-flow field";

struct Reader<'a> {
    path: &'a Path,
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Reader { path, lines, pos: 0 }
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> CliError {
        CliError::Parse { path: self.path.to_path_buf(), line, msg: msg.into() }
    }

    fn last_line(&self) -> usize {
        self.lines.last().map_or(0, |l| l.0)
    }

    fn peek(&self) -> Option<(usize, &'a str)> {
        self.lines.get(self.pos).copied()
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let l = self.peek();
        self.pos += 1;
        l
    }

    /// Header lines up to (not including) the first block keyword.
    fn header(&mut self, blocks: &[&str]) -> Result<Vec<(usize, &'a str, &'a str)>> {
        let mut out = Vec::new();
        while let Some((line, text)) = self.peek() {
            let (key, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
            if blocks.contains(&key) && rest.is_empty() {
                break;
            }
            if rest.is_empty() {
                return Err(self.err(line, format!("expected `key value`, found `{text}`")));
            }
            out.push((line, key, rest.trim()));
            self.pos += 1;
        }
        Ok(out)
    }

    fn expect_block(&mut self, name: &str) -> Result<()> {
        match self.next() {
            Some((_, t)) if t == name => Ok(()),
            Some((line, t)) => Err(self.err(line, format!("expected `{name}`, found `{t}`"))),
            None => Err(self.err(self.last_line(), format!("missing `{name}` block"))),
        }
    }

    fn rows(&mut self, count: usize, width: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(count * width);
        for r in 0..count {
            let (line, text) = self
                .next()
                .ok_or_else(|| self.err(self.last_line(), format!("block ended after {r} of {count} rows")))?;
            let before = out.len();
            for tok in text.split_whitespace() {
                out.push(parse_f64(tok).map_err(|m| self.err(line, m))?);
            }
            if out.len() - before != width {
                return Err(self.err(line, format!("expected {width} values, found {}", out.len() - before)));
            }
        }
        Ok(out)
    }

    fn finish(&self) -> Result<()> {
        match self.peek() {
            Some((line, t)) => Err(self.err(line, format!("unexpected trailing content `{t}`"))),
            None => Ok(()),
        }
    }
}

fn parse_f64(tok: &str) -> std::result::Result<f64, String> {
    tok.parse::<f64>().map_err(|_| format!("`{tok}` is not a number"))
}

struct Header<'a> {
    entries: Vec<(usize, &'a str, &'a str)>,
}

impl<'a> Header<'a> {
    fn get(&self, r: &Reader, key: &str) -> Result<(usize, &'a str)> {
        self.entries
            .iter()
            .find(|e| e.1 == key)
            .map(|e| (e.0, e.2))
            .ok_or_else(|| r.err(1, format!("missing header key `{key}`")))
    }

    fn opt(&self, key: &str) -> Option<(usize, &'a str)> {
        self.entries.iter().find(|e| e.1 == key).map(|e| (e.0, e.2))
    }

    fn usize(&self, r: &Reader, key: &str) -> Result<usize> {
        let (line, v) = self.get(r, key)?;
        v.parse().map_err(|_| r.err(line, format!("`{key}` must be a non-negative integer")))
    }

    fn f64(&self, r: &Reader, key: &str) -> Result<f64> {
        let (line, v) = self.get(r, key)?;
        parse_f64(v).map_err(|m| r.err(line, m))
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn check_magic(path: &Path, text: &str, magic: &str) -> Result<()> {
    if text.lines().next().map(str::trim) == Some(magic) {
        Ok(())
    } else {
        Err(CliError::Parse { path: path.to_path_buf(), line: 1, msg: format!("expected `{magic}` header") })
    }
}

/// Writes `contents` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(contents).map_err(|e| CliError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn push_row(out: &mut String, row: &[f64]) {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v:?}").unwrap();
    }
    out.push('\n');
}

pub fn geometry_to_string(g: &Geometry, with_distances: bool) -> String {
    let mut s = String::new();
    writeln!(s, "{GEOMETRY_MAGIC}").unwrap();
    writeln!(s, "dim {}", g.dim()).unwrap();
    writeln!(s, "ambient {}", g.ambient_dim()).unwrap();
    match g.kind() {
        GeometryKind::Sphere { scheme, .. } => writeln!(s, "kind sphere {}", scheme.name()).unwrap(),
        GeometryKind::PointCloud => writeln!(s, "kind point_cloud").unwrap(),
    }
    writeln!(s, "count {}", g.len()).unwrap();
    s.push_str("nodes\n");
    for i in 0..g.len() {
        push_row(&mut s, g.node(i));
    }
    s.push_str("weights\n");
    for w in g.weights() {
        push_row(&mut s, &[*w]);
    }
    if with_distances {
        s.push_str("distances\n");
        for row in g.geodesic_table().chunks(g.len()) {
            push_row(&mut s, row);
        }
    }
    s
}

pub fn save_geometry(path: &Path, g: &Geometry, with_distances: bool) -> Result<()> {
    write_atomic(path, geometry_to_string(g, with_distances).as_bytes())
}

/// Parses a geometry file and runs the full geometry validation on it.
pub fn load_geometry(path: &Path) -> Result<Geometry> {
    let text = read_text(path)?;
    check_magic(path, &text, GEOMETRY_MAGIC)?;
    let mut r = Reader::new(path, &text);
    let h = Header { entries: r.header(&["nodes"])? };
    let dim = h.usize(&r, "dim")?;
    let ambient = match h.opt("ambient") {
        Some(_) => h.usize(&r, "ambient")?,
        None => dim + 1,
    };
    let count = h.usize(&r, "count")?;
    let kind = match h.opt("kind") {
        None => GeometryKind::PointCloud,
        Some((line, v)) => {
            let mut parts = v.split_whitespace();
            match (parts.next(), parts.next()) {
                (Some("point_cloud"), None) => GeometryKind::PointCloud,
                (Some("sphere"), Some(name)) => {
                    let scheme = SphereScheme::parse(name)
                        .ok_or_else(|| r.err(line, format!("unknown sphere scheme `{name}`")))?;
                    GeometryKind::Sphere { n: dim, scheme }
                }
                _ => return Err(r.err(line, format!("unknown geometry kind `{v}`"))),
            }
        }
    };
    r.expect_block("nodes")?;
    let nodes = r.rows(count, ambient)?;
    r.expect_block("weights")?;
    let weights = r.rows(count, 1)?;
    let distances = if r.peek().map(|l| l.1) == Some("distances") {
        r.next();
        Some(r.rows(count, count)?)
    } else {
        None
    };
    r.finish()?;
    Ok(Geometry::from_parts(dim, ambient, nodes, weights, distances, kind)?)
}

pub fn kernel_to_string(k: &KernelOperator) -> String {
    let h = k.header();
    let mut s = String::new();
    writeln!(s, "{KERNEL_MAGIC}").unwrap();
    writeln!(s, "dim {}", k.dim()).unwrap();
    writeln!(s, "count {}", k.len()).unwrap();
    writeln!(s, "sigma {:?}", h.sigma).unwrap();
    writeln!(s, "scale {:?}", h.scale).unwrap();
    writeln!(s, "lambda {:?}", h.lambda).unwrap();
    writeln!(s, "distance {}", h.distance.name()).unwrap();
    writeln!(s, "intertwining {}", h.intertwining).unwrap();
    writeln!(s, "diagonal {}", h.diagonal.name()).unwrap();
    s.push_str("matrix\n");
    for i in 0..k.len() {
        push_row(&mut s, k.row(i));
    }
    s
}

pub fn save_kernel(path: &Path, k: &KernelOperator) -> Result<()> {
    write_atomic(path, kernel_to_string(k).as_bytes())
}

/// Parses a kernel file for `geom`. The matrix is checked for symmetry and
/// for the bounds stated in its header.
pub fn load_kernel(path: &Path, geom: Arc<Geometry>) -> Result<KernelOperator> {
    let text = read_text(path)?;
    check_magic(path, &text, KERNEL_MAGIC)?;
    let mut r = Reader::new(path, &text);
    let h = Header { entries: r.header(&["matrix"])? };
    let dim = h.usize(&r, "dim")?;
    let count = h.usize(&r, "count")?;
    if dim != geom.dim() || count != geom.len() {
        return Err(CliError::config(format!(
            "kernel is for {count} nodes in dimension {dim}, geometry has {} nodes in dimension {}",
            geom.len(),
            geom.dim()
        )));
    }
    let (line, dist) = h.get(&r, "distance")?;
    let distance = DistanceKind::parse(dist).ok_or_else(|| r.err(line, format!("unknown distance `{dist}`")))?;
    let (line, diag) = h.get(&r, "diagonal")?;
    let diagonal = DiagonalRule::parse(diag).ok_or_else(|| r.err(line, format!("unknown diagonal rule `{diag}`")))?;
    let (line, flag) = h.get(&r, "intertwining")?;
    let intertwining = flag.parse().map_err(|_| r.err(line, "`intertwining` must be true or false"))?;
    let header = KernelHeader {
        sigma: h.f64(&r, "sigma")?,
        scale: h.f64(&r, "scale")?,
        lambda: h.f64(&r, "lambda")?,
        distance,
        intertwining,
        diagonal,
    };
    r.expect_block("matrix")?;
    let matrix = r.rows(count, count)?;
    r.finish()?;
    Ok(KernelOperator::from_matrix(geom, matrix, header)?)
}

/// A nodal field, optionally stamped with the time it was taken at.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub values: Vec<f64>,
    pub t: Option<f64>,
}

pub fn field_to_string(f: &Field) -> String {
    let mut s = String::new();
    writeln!(s, "{FIELD_MAGIC}").unwrap();
    writeln!(s, "count {}", f.values.len()).unwrap();
    if let Some(t) = f.t {
        writeln!(s, "t {t:?}").unwrap();
    }
    s.push_str("values\n");
    for v in &f.values {
        push_row(&mut s, &[*v]);
    }
    s
}

pub fn save_field(path: &Path, f: &Field) -> Result<()> {
    write_atomic(path, field_to_string(f).as_bytes())
}

pub fn load_field(path: &Path) -> Result<Field> {
    let text = read_text(path)?;
    check_magic(path, &text, FIELD_MAGIC)?;
    let mut r = Reader::new(path, &text);
    let h = Header { entries: r.header(&["values"])? };
    let count = h.usize(&r, "count")?;
    let t = match h.opt("t") {
        Some(_) => Some(h.f64(&r, "t")?),
        None => None,
    };
    r.expect_block("values")?;
    let values = r.rows(count, 1)?;
    r.finish()?;
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(CliError::config(format!("{}: non-finite value at node {i}", path.display())));
    }
    Ok(Field { values, t })
}

fn q_label(q: f64) -> String {
    format!("M_{q}")
}

pub fn diagnostics_header(q_set: &[f64]) -> Vec<String> {
    let mut h: Vec<String> = ["t", "V", "a", "J"].iter().map(|s| s.to_string()).collect();
    h.extend(q_set.iter().map(|q| q_label(*q)));
    h.extend(["G", "Z", "harnack", "ps_residual", "dt"].iter().map(|s| s.to_string()));
    h
}

/// Fixed 17-significant-digit scientific notation.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_diagnostics(path: &Path, q_set: &[f64], records: &[DiagnosticsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::io(path, std::io::Error::other(e));
    w.write_record(diagnostics_header(q_set)).map_err(csv_err)?;
    for r in records {
        let mut row = vec![fmt17(r.t), fmt17(r.v), fmt17(r.a), fmt17(r.j)];
        row.extend(r.moments.iter().map(|m| fmt17(*m)));
        row.extend([fmt17(r.g), fmt17(r.z), fmt17(r.harnack), fmt17(r.ps_residual), fmt17(r.dt)]);
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(path, std::io::Error::other(e.to_string())))?;
    write_atomic(path, &bytes)
}

/// Column names and numeric rows of a diagnostics file.
pub fn read_diagnostics(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| CliError::io(path, std::io::Error::other(e)))?;
    let header: Vec<String> = rd
        .headers()
        .map_err(|e| CliError::io(path, std::io::Error::other(e)))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| CliError::io(path, std::io::Error::other(e)))?;
        let row = rec
            .iter()
            .map(parse_f64)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|msg| CliError::Parse { path: path.to_path_buf(), line: i + 2, msg })?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn write_toml(path: &Path, table: &toml::Table) -> Result<()> {
    let text = toml::to_string_pretty(table).map_err(|e| CliError::config(e.to_string()))?;
    write_atomic(path, text.as_bytes())
}

pub fn read_toml(path: &Path) -> Result<toml::Table> {
    let text = read_text(path)?;
    text.parse::<toml::Table>()
        .map_err(|e| CliError::Parse { path: path.to_path_buf(), line: 0, msg: e.to_string() })
}

/// Adds `entry` to the array `key` of the manifest at `path`, creating
/// either when missing.
pub fn append_to_manifest(path: &Path, key: &str, entry: toml::Table) -> Result<()> {
    let mut table = if path.exists() { read_toml(path)? } else { toml::Table::new() };
    let slot = table.entry(key).or_insert_with(|| toml::Value::Array(Vec::new()));
    match slot {
        toml::Value::Array(a) => a.push(toml::Value::Table(entry)),
        _ => return Err(CliError::config(format!("manifest key `{key}` is not an array"))),
    }
    write_toml(path, &table)
}
