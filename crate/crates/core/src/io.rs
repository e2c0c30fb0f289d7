//! On-disk formats.
//!
//! * Rasters: binary PGM (`P5`), 8-bit, maxval 255, row-major, top-left
//!   origin. Masks store 0 / 255; probability maps store `round(255 p)`.
//! * Graphs: line-oriented text (`N id x y`, `E id_a id_b [x y ...]`, `#`
//!   comments, blank lines ignored) or the equivalent JSON document. Trailing
//!   coordinate pairs on an `E` line are interior polyline vertices. Node ids
//!   may be any distinct non-negative integers; they are remapped densely in
//!   order of appearance.
//! * Label / output pyramids and reports: JSON documents.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::graph::{Point, RoadGraph};
use crate::labelgen::{LabelMatrix, LabelPyramid};
use crate::losses::{OutputLevel, OutputPyramid};
use crate::raster::{BinaryMask, ProbabilityMap};

pub const TOOL_NAME: &str = "roadtopo";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Version of the pyramid and report documents.
pub const FORMAT_VERSION: u32 = 1;

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// A decoded 8-bit grayscale raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gray8 {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Decodes a binary PGM with maxval 255.
pub fn decode_pgm(bytes: &[u8]) -> Result<Gray8> {
    let mut pos = 0;
    let mut token = |what: &str| -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format(format!("PGM header truncated before {what}")));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token("magic")?;
    if magic != "P5" {
        return Err(Error::Format(format!("expected PGM magic P5, found {magic:?}")));
    }
    let mut number = |what: &str| -> Result<usize> {
        let t = token(what)?;
        t.parse()
            .map_err(|_| Error::Format(format!("PGM {what} {t:?} is not a non-negative integer")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("PGM maxval {maxval} unsupported (need 255)")));
    }
    // Exactly one whitespace byte separates the header from the payload.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Format("PGM header not terminated by whitespace".into()));
    }
    let payload = &bytes[pos + 1..];
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format(format!("PGM dimensions {width}x{height} overflow")))?;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "PGM declares {width}x{height} = {expected} pixels but carries {} bytes",
            payload.len()
        )));
    }
    Ok(Gray8 {
        width,
        height,
        pixels: payload.to_vec(),
    })
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(width * height, pixels.len());
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn mask_from_gray(g: &Gray8) -> Result<BinaryMask> {
    let mut bits = Vec::with_capacity(g.pixels.len());
    for (i, &v) in g.pixels.iter().enumerate() {
        match v {
            0 => bits.push(false),
            255 => bits.push(true),
            _ => {
                return Err(Error::Domain(format!(
                    "pixel ({}, {}) has value {v}; binary masks hold only 0 or 255",
                    i % g.width,
                    i / g.width
                )))
            }
        }
    }
    BinaryMask::new(g.width, g.height, bits)
}

pub fn probability_from_gray(g: &Gray8) -> ProbabilityMap {
    ProbabilityMap::new(g.width, g.height, g.pixels.iter().map(|&v| v as f64 / 255.0).collect())
        .expect("byte values map into [0, 1]")
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    mask_from_gray(&decode_pgm(&read_bytes(path)?)?)
}

pub fn read_probability_map(path: impl AsRef<Path>) -> Result<ProbabilityMap> {
    let path = path.as_ref();
    Ok(probability_from_gray(&decode_pgm(&read_bytes(path)?)?))
}

pub fn encode_mask(m: &BinaryMask) -> Vec<u8> {
    let px: Vec<u8> = m.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    encode_pgm(m.width(), m.height(), &px)
}

pub fn encode_probability_map(p: &ProbabilityMap) -> Vec<u8> {
    let px: Vec<u8> = p.values().iter().map(|&v| (v * 255.0).round() as u8).collect();
    encode_pgm(p.width(), p.height(), &px)
}

pub fn write_mask(m: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_mask(m))
}

pub fn write_probability_map(p: &ProbabilityMap, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_probability_map(p))
}

fn build_graph(nodes: Vec<(u64, Point)>, edges: Vec<(u64, u64, Vec<Point>)>) -> Result<RoadGraph> {
    let mut index: HashMap<u64, usize> = HashMap::with_capacity(nodes.len());
    let mut points = Vec::with_capacity(nodes.len());
    for (id, p) in nodes {
        if index.insert(id, points.len()).is_some() {
            return Err(Error::Format(format!("duplicate node id {id}")));
        }
        points.push(p);
    }
    let mut dense = Vec::with_capacity(edges.len());
    for (a, b, via) in edges {
        let lookup = |id: u64| {
            index
                .get(&id)
                .copied()
                .ok_or_else(|| Error::Reference(format!("edge ({a}, {b}) references unknown node {id}")))
        };
        dense.push((lookup(a)?, lookup(b)?, via));
    }
    RoadGraph::with_polylines(points, dense)
}

/// Parses the line-oriented graph text format.
pub fn parse_graph_text(text: &str) -> Result<RoadGraph> {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: &str| Error::Format(format!("line {}: {msg}: {raw:?}", lineno + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        let int = |s: &str| s.parse::<u64>().map_err(|_| bad("expected a non-negative integer id"));
        let real = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad("expected a finite coordinate"))
        };
        match fields[0] {
            "N" if fields.len() == 4 => {
                nodes.push((int(fields[1])?, Point::new(real(fields[2])?, real(fields[3])?)));
            }
            "E" if fields.len() >= 3 && fields.len() % 2 == 1 => {
                let via = fields[3..]
                    .chunks(2)
                    .map(|c| Ok(Point::new(real(c[0])?, real(c[1])?)))
                    .collect::<Result<Vec<_>>>()?;
                edges.push((int(fields[1])?, int(fields[2])?, via));
            }
            _ => return Err(bad("expected `N id x y` or `E id_a id_b [x y ...]`")),
        }
    }
    build_graph(nodes, edges)
}

pub fn format_graph_text(g: &RoadGraph) -> String {
    let mut out = String::new();
    for (id, p) in g.points().iter().enumerate() {
        out.push_str(&format!("N {id} {} {}\n", p.x, p.y));
    }
    for e in g.edges() {
        out.push_str(&format!("E {} {}", e.a, e.b));
        for p in &e.via {
            out.push_str(&format!(" {} {}", p.x, p.y));
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    id: u64,
    x: f64,
    y: f64,
}

#[derive(Serialize, Deserialize)]
struct EdgeDoc {
    a: u64,
    b: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    via: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
}

pub fn parse_graph_json(text: &str) -> Result<RoadGraph> {
    let doc: GraphDoc = serde_json::from_str(text).map_err(|e| Error::Format(format!("graph document: {e}")))?;
    build_graph(
        doc.nodes.into_iter().map(|n| (n.id, Point::new(n.x, n.y))).collect(),
        doc.edges
            .into_iter()
            .map(|e| (e.a, e.b, e.via.into_iter().map(|[x, y]| Point::new(x, y)).collect()))
            .collect(),
    )
}

pub fn format_graph_json(g: &RoadGraph) -> String {
    let doc = GraphDoc {
        nodes: g
            .points()
            .iter()
            .enumerate()
            .map(|(id, p)| NodeDoc {
                id: id as u64,
                x: p.x,
                y: p.y,
            })
            .collect(),
        edges: g
            .edges()
            .iter()
            .map(|e| EdgeDoc {
                a: e.a as u64,
                b: e.b as u64,
                via: e.via.iter().map(|p| [p.x, p.y]).collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("graph serializes") + "\n"
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Reads a graph; `.json` files use the document form, anything else the text form.
pub fn read_graph(path: impl AsRef<Path>) -> Result<RoadGraph> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Format(format!("{} is not UTF-8", path.display())))?;
    if is_json(path) {
        parse_graph_json(&text)
    } else {
        parse_graph_text(&text)
    }
}

pub fn write_graph(g: &RoadGraph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = if is_json(path) {
        format_graph_json(g)
    } else {
        format_graph_text(g)
    };
    write_bytes(path, text.as_bytes())
}

#[derive(Serialize, Deserialize)]
struct LevelDoc<T> {
    level: usize,
    patch_size: usize,
    rows: Vec<Vec<T>>,
}

#[derive(Serialize, Deserialize)]
struct PyramidDoc<T> {
    kind: String,
    format_version: u32,
    levels: Vec<LevelDoc<T>>,
}

const LABEL_KIND: &str = "label_pyramid";
const OUTPUT_KIND: &str = "output_pyramid";

fn to_rows<T: Copy>(values: &[T], cols: usize) -> Vec<Vec<T>> {
    if cols == 0 {
        return Vec::new();
    }
    values.chunks(cols).map(|r| r.to_vec()).collect()
}

fn from_rows<T: Copy>(k: usize, rows: &[Vec<T>]) -> Result<(usize, usize, Vec<T>)> {
    let cols = rows.first().map_or(0, |r| r.len());
    if let Some(r) = rows.iter().position(|r| r.len() != cols) {
        return Err(Error::Format(format!(
            "level {k} row {r} has {} entries, row 0 has {cols}",
            rows[r].len()
        )));
    }
    Ok((rows.len(), cols, rows.iter().flatten().copied().collect()))
}

fn parse_pyramid_doc<T: for<'de> Deserialize<'de>>(text: &str, kind: &str) -> Result<PyramidDoc<T>> {
    let doc: PyramidDoc<T> = serde_json::from_str(text).map_err(|e| Error::Format(format!("{kind} document: {e}")))?;
    if doc.kind != kind {
        return Err(Error::Format(format!(
            "expected a {kind} document, found {:?}",
            doc.kind
        )));
    }
    for (k, l) in doc.levels.iter().enumerate() {
        if l.level != k {
            return Err(Error::Format(format!("level entry {k} is numbered {}", l.level)));
        }
    }
    Ok(doc)
}

pub fn format_label_pyramid(p: &LabelPyramid) -> String {
    let doc = PyramidDoc {
        kind: LABEL_KIND.into(),
        format_version: FORMAT_VERSION,
        levels: p
            .levels()
            .iter()
            .enumerate()
            .map(|(k, l)| LevelDoc {
                level: k,
                patch_size: l.patch_size(),
                rows: to_rows(&l.labels().iter().map(|&b| b as u8).collect::<Vec<_>>(), l.cols()),
            })
            .collect(),
    };
    serde_json::to_string(&doc).expect("pyramid serializes") + "\n"
}

pub fn parse_label_pyramid(text: &str) -> Result<LabelPyramid> {
    let doc: PyramidDoc<u8> = parse_pyramid_doc(text, LABEL_KIND)?;
    let mut levels = Vec::with_capacity(doc.levels.len());
    for (k, l) in doc.levels.iter().enumerate() {
        let (rows, cols, values) = from_rows(k, &l.rows)?;
        let labels = values
            .iter()
            .map(|&v| match v {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(Error::Domain(format!("level {k} holds label {v}; labels are 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        levels.push(LabelMatrix::new(l.patch_size, rows, cols, labels)?);
    }
    LabelPyramid::new(levels)
}

pub fn write_label_pyramid(p: &LabelPyramid, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), format_label_pyramid(p).as_bytes())
}

pub fn read_label_pyramid(path: impl AsRef<Path>) -> Result<LabelPyramid> {
    let path = path.as_ref();
    parse_label_pyramid(&String::from_utf8_lossy(&read_bytes(path)?))
}

pub fn format_output_pyramid(p: &OutputPyramid) -> String {
    let doc = PyramidDoc {
        kind: OUTPUT_KIND.into(),
        format_version: FORMAT_VERSION,
        levels: p
            .levels()
            .iter()
            .enumerate()
            .map(|(k, l)| LevelDoc {
                level: k,
                patch_size: l.patch_size,
                rows: to_rows(&l.values, l.cols),
            })
            .collect(),
    };
    serde_json::to_string(&doc).expect("pyramid serializes") + "\n"
}

pub fn parse_output_pyramid(text: &str) -> Result<OutputPyramid> {
    let doc: PyramidDoc<f64> = parse_pyramid_doc(text, OUTPUT_KIND)?;
    let mut levels = Vec::with_capacity(doc.levels.len());
    for (k, l) in doc.levels.iter().enumerate() {
        let (rows, cols, values) = from_rows(k, &l.rows)?;
        levels.push(OutputLevel {
            patch_size: l.patch_size,
            rows,
            cols,
            values,
        });
    }
    OutputPyramid::new(levels)
}

pub fn write_output_pyramid(p: &OutputPyramid, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), format_output_pyramid(p).as_bytes())
}

pub fn read_output_pyramid(path: impl AsRef<Path>) -> Result<OutputPyramid> {
    let path = path.as_ref();
    parse_output_pyramid(&String::from_utf8_lossy(&read_bytes(path)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub format_version: u32,
    pub inputs: Vec<String>,
    pub tool: String,
    pub tool_version: String,
}

impl Provenance {
    pub fn new(inputs: Vec<String>) -> Self {
        Self {
            inputs,
            tool: TOOL_NAME.into(),
            tool_version: TOOL_VERSION.into(),
            format_version: FORMAT_VERSION,
        }
    }
}

/// Metric values, the full parameter set and provenance. Keys serialize in
/// sorted order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metrics: BTreeMap<String, f64>,
    pub params: Value,
    pub provenance: Provenance,
}

pub fn format_report(r: &Report) -> String {
    serde_json::to_string_pretty(r).expect("report serializes") + "\n"
}

pub fn parse_report(text: &str) -> Result<Report> {
    serde_json::from_str(text).map_err(|e| Error::Format(format!("report document: {e}")))
}

pub fn write_report(r: &Report, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), format_report(r).as_bytes())
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Report> {
    let path = path.as_ref();
    parse_report(&String::from_utf8_lossy(&read_bytes(path)?))
}
