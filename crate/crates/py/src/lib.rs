//! Python bindings. Rasters cross the boundary as nested lists indexed
//! `[y][x]`; graphs as node coordinate lists plus edge index pairs.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict};

use roadtopo::graph::{self, PathQuery, Point};
use roadtopo::labelgen::{self, LabelConfig, LabelMatrix};
use roadtopo::losses::{self, LossOptions, LossValue, OutputLevel};
use roadtopo::metrics::{self, GroundTruth, HolesMarblesParams, JunctParams, PrecisionRecall, Sampling};
use roadtopo::params::Params;
use roadtopo::{io, raster, Error};

trait OrRaise<T> {
    fn or_raise(self) -> PyResult<T>;
}

impl<T> OrRaise<T> for roadtopo::Result<T> {
    fn or_raise(self) -> PyResult<T> {
        self.map_err(|e| match e {
            Error::Io { .. } => PyOSError::new_err(e.to_string()),
            _ => PyValueError::new_err(e.to_string()),
        })
    }
}

fn flatten<T: Copy>(rows: &[Vec<T>]) -> PyResult<(usize, usize, Vec<T>)> {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if let Some(y) = rows.iter().position(|r| r.len() != w) {
        return Err(PyValueError::new_err(format!(
            "row {y} has {} entries, expected {w}",
            rows[y].len()
        )));
    }
    Ok((w, h, rows.concat()))
}

fn unflatten<T: Clone>(values: &[T], width: usize) -> Vec<Vec<T>> {
    if width == 0 {
        return Vec::new();
    }
    values.chunks(width).map(<[T]>::to_vec).collect()
}

fn sampling(samples: Option<usize>, seed: u64) -> Sampling {
    match samples {
        None => Sampling::Exhaustive,
        Some(n) => Sampling::Random { n, seed },
    }
}

fn pr_dict(pr: PrecisionRecall) -> BTreeMap<&'static str, f64> {
    BTreeMap::from([("precision", pr.precision), ("recall", pr.recall), ("f1", pr.f1)])
}

/// Binary road mask.
#[pyclass(name = "BinaryMask", module = "roadtopo", frozen, skip_from_py_object, eq)]
#[derive(Clone, PartialEq)]
pub struct PyBinaryMask(raster::BinaryMask);

#[pymethods]
impl PyBinaryMask {
    /// Builds a mask from rows of 0/1 (or bool) values.
    #[new]
    fn new(rows: Vec<Vec<u8>>) -> PyResult<Self> {
        let (w, h, v) = flatten(&rows)?;
        if let Some(i) = v.iter().position(|&b| b > 1) {
            return Err(PyValueError::new_err(format!(
                "pixel ({}, {}) is {}, expected 0 or 1",
                i % w,
                i / w,
                v[i]
            )));
        }
        raster::BinaryMask::new(w, h, v.into_iter().map(|b| b == 1).collect())
            .or_raise()
            .map(Self)
    }

    #[staticmethod]
    fn zeros(width: usize, height: usize) -> Self {
        Self(raster::BinaryMask::zeros(width, height))
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        io::read_mask(path).or_raise().map(Self)
    }

    fn write(&self, path: &str) -> PyResult<()> {
        io::write_mask(&self.0, path).or_raise()
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn count(&self) -> usize {
        self.0.count_ones()
    }

    fn get(&self, x: usize, y: usize) -> PyResult<bool> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(PyValueError::new_err(format!("pixel ({x}, {y}) outside the mask")));
        }
        Ok(self.0.get(x, y))
    }

    fn to_rows(&self) -> Vec<Vec<bool>> {
        unflatten(self.0.bits(), self.0.width())
    }

    fn __repr__(&self) -> String {
        format!(
            "BinaryMask({}x{}, {} on)",
            self.0.width(),
            self.0.height(),
            self.0.count_ones()
        )
    }
}

/// Per-pixel road probabilities in [0, 1].
#[pyclass(name = "ProbabilityMap", module = "roadtopo", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyProbabilityMap(raster::ProbabilityMap);

#[pymethods]
impl PyProbabilityMap {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let (w, h, v) = flatten(&rows)?;
        raster::ProbabilityMap::new(w, h, v).or_raise().map(Self)
    }

    #[staticmethod]
    fn filled(width: usize, height: usize, value: f64) -> PyResult<Self> {
        raster::ProbabilityMap::filled(width, height, value)
            .or_raise()
            .map(Self)
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        io::read_probability_map(path).or_raise().map(Self)
    }

    fn write(&self, path: &str) -> PyResult<()> {
        io::write_probability_map(&self.0, path).or_raise()
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn to_rows(&self) -> Vec<Vec<f64>> {
        unflatten(self.0.values(), self.0.width())
    }

    fn __repr__(&self) -> String {
        format!("ProbabilityMap({}x{})", self.0.width(), self.0.height())
    }
}

/// Undirected road graph with polyline edges.
#[pyclass(name = "RoadGraph", module = "roadtopo", frozen, skip_from_py_object, eq)]
#[derive(Clone, PartialEq)]
pub struct PyRoadGraph(graph::RoadGraph);

#[pymethods]
impl PyRoadGraph {
    /// `nodes` are `(x, y)` pairs; `edges` are `(a, b)` index pairs, and
    /// `via` optionally gives interior vertices per edge.
    #[new]
    #[pyo3(signature = (nodes, edges, via = None))]
    fn new(nodes: Vec<(f64, f64)>, edges: Vec<(usize, usize)>, via: Option<Vec<Vec<(f64, f64)>>>) -> PyResult<Self> {
        let points = nodes.into_iter().map(|(x, y)| Point::new(x, y)).collect();
        let via = via.unwrap_or_else(|| vec![Vec::new(); edges.len()]);
        if via.len() != edges.len() {
            return Err(PyValueError::new_err(format!(
                "{} via lists for {} edges",
                via.len(),
                edges.len()
            )));
        }
        let edges = edges
            .into_iter()
            .zip(via)
            .map(|((a, b), v)| (a, b, v.into_iter().map(|(x, y)| Point::new(x, y)).collect()))
            .collect();
        graph::RoadGraph::with_polylines(points, edges).or_raise().map(Self)
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        io::read_graph(path).or_raise().map(Self)
    }

    fn write(&self, path: &str) -> PyResult<()> {
        io::write_graph(&self.0, path).or_raise()
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        io::parse_graph_text(text).or_raise().map(Self)
    }

    fn to_text(&self) -> String {
        io::format_graph_text(&self.0)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        io::parse_graph_json(text).or_raise().map(Self)
    }

    fn to_json(&self) -> String {
        io::format_graph_json(&self.0)
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.0.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.0.edge_count()
    }

    fn nodes(&self) -> Vec<(f64, f64)> {
        self.0.points().iter().map(|p| (p.x, p.y)).collect()
    }

    /// Edges as `(a, b, via)` triples.
    fn edges(&self) -> Vec<(usize, usize, Polyline)> {
        self.0
            .edges()
            .iter()
            .map(|e| (e.a, e.b, e.via.iter().map(|p| (p.x, p.y)).collect()))
            .collect()
    }

    fn total_length(&self) -> f64 {
        self.0.total_length()
    }

    fn component_count(&self) -> usize {
        self.0.component_count()
    }

    fn junctions(&self) -> Vec<usize> {
        self.0.junctions()
    }

    /// Geodesic distance between two nodes, or `None` when disconnected.
    fn shortest_path_length(&self, source: usize, target: usize) -> PyResult<Option<f64>> {
        self.0.shortest_path_length(PathQuery { source, target }).or_raise()
    }

    /// Points every `spacing` along the roads within geodesic `radius` of `start`.
    fn walk_points(&self, start: usize, radius: f64, spacing: f64) -> PyResult<Vec<(f64, f64)>> {
        Ok(self
            .0
            .walk_points(start, radius, spacing)
            .or_raise()?
            .into_iter()
            .map(|p| (p.x, p.y))
            .collect())
    }

    fn scaled(&self, factor: f64) -> Self {
        Self(self.0.scaled(factor))
    }

    fn translated(&self, dx: f64, dy: f64) -> Self {
        Self(self.0.translated(dx, dy))
    }

    fn __repr__(&self) -> String {
        format!(
            "RoadGraph({} nodes, {} edges)",
            self.0.node_count(),
            self.0.edge_count()
        )
    }
}

/// Correct/incorrect patch labels, coarsest level first.
#[pyclass(name = "LabelPyramid", module = "roadtopo", frozen, skip_from_py_object, eq)]
#[derive(Clone, PartialEq)]
pub struct PyLabelPyramid(labelgen::LabelPyramid);

#[pymethods]
impl PyLabelPyramid {
    /// `levels` are `(patch_size, rows)` pairs with 0/1 entries, coarsest first.
    #[new]
    fn new(levels: Vec<(usize, Vec<Vec<u8>>)>) -> PyResult<Self> {
        let mut out = Vec::with_capacity(levels.len());
        for (patch, rows) in levels {
            let (cols, n_rows, v) = flatten(&rows)?;
            if v.iter().any(|&b| b > 1) {
                return Err(PyValueError::new_err("labels must be 0 or 1"));
            }
            out.push(LabelMatrix::new(patch, n_rows, cols, v.into_iter().map(|b| b == 1).collect()).or_raise()?);
        }
        labelgen::LabelPyramid::new(out).or_raise().map(Self)
    }

    #[staticmethod]
    #[pyo3(signature = (width, height, cell = labelgen::DEFAULT_CELL, levels = labelgen::DEFAULT_LEVELS))]
    fn all_ones(width: usize, height: usize, cell: usize, levels: usize) -> PyResult<Self> {
        let config = LabelConfig {
            cell,
            levels,
            ..LabelConfig::default()
        };
        labelgen::LabelPyramid::all_ones(width, height, &config)
            .or_raise()
            .map(Self)
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        io::read_label_pyramid(path).or_raise().map(Self)
    }

    fn write(&self, path: &str) -> PyResult<()> {
        io::write_label_pyramid(&self.0, path).or_raise()
    }

    fn patch_sizes(&self) -> Vec<usize> {
        self.0.levels().iter().map(LabelMatrix::patch_size).collect()
    }

    fn levels(&self) -> Vec<Vec<Vec<bool>>> {
        self.0
            .levels()
            .iter()
            .map(|l| unflatten(l.labels(), l.cols()))
            .collect()
    }

    /// `(row, col)` of every zero label per level.
    fn zeros(&self) -> Vec<Vec<(usize, usize)>> {
        self.0.levels().iter().map(LabelMatrix::zeros).collect()
    }

    fn cell_count(&self) -> usize {
        self.0.cell_count()
    }

    fn is_all_ones(&self) -> bool {
        self.0.is_all_ones()
    }

    fn __repr__(&self) -> String {
        format!("LabelPyramid(patch_sizes={:?})", self.patch_sizes())
    }
}

/// Discriminator outputs shaped like a [`PyLabelPyramid`].
#[pyclass(name = "OutputPyramid", module = "roadtopo", frozen, skip_from_py_object, eq)]
#[derive(Clone, PartialEq)]
pub struct PyOutputPyramid(losses::OutputPyramid);

#[pymethods]
impl PyOutputPyramid {
    /// `levels` are `(patch_size, rows)` pairs, coarsest first.
    #[new]
    fn new(levels: Vec<(usize, Vec<Vec<f64>>)>) -> PyResult<Self> {
        let mut out = Vec::with_capacity(levels.len());
        for (patch_size, rows) in levels {
            let (cols, n_rows, values) = flatten(&rows)?;
            out.push(OutputLevel {
                patch_size,
                rows: n_rows,
                cols,
                values,
            });
        }
        losses::OutputPyramid::new(out).or_raise().map(Self)
    }

    #[staticmethod]
    fn filled_like(labels: &PyLabelPyramid, value: f64) -> PyResult<Self> {
        losses::OutputPyramid::filled_like(&labels.0, value)
            .or_raise()
            .map(Self)
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        io::read_output_pyramid(path).or_raise().map(Self)
    }

    fn write(&self, path: &str) -> PyResult<()> {
        io::write_output_pyramid(&self.0, path).or_raise()
    }

    fn levels(&self) -> Vec<Vec<Vec<f64>>> {
        self.0.levels().iter().map(|l| unflatten(&l.values, l.cols)).collect()
    }

    fn cell_count(&self) -> usize {
        self.0.cell_count()
    }
}

#[pyfunction]
#[pyo3(signature = (prob, threshold = raster::DEFAULT_THRESHOLD))]
fn threshold(prob: &PyProbabilityMap, threshold: f64) -> PyResult<PyBinaryMask> {
    raster::threshold_forward(&prob.0, threshold)
        .or_raise()
        .map(PyBinaryMask)
}

/// Square (Chebyshev) dilation.
#[pyfunction]
#[pyo3(signature = (mask, radius = raster::DEFAULT_DILATION))]
fn dilate(mask: &PyBinaryMask, radius: usize) -> PyBinaryMask {
    PyBinaryMask(raster::dilate(&mask.0, radius))
}

#[pyfunction]
fn skeletonize(mask: &PyBinaryMask) -> PyBinaryMask {
    PyBinaryMask(raster::skeletonize(&mask.0))
}

#[pyfunction]
#[pyo3(signature = (pred, gt, threshold = raster::DEFAULT_THRESHOLD, dilation = raster::DEFAULT_DILATION))]
fn build_t0(pred: &PyProbabilityMap, gt: &PyBinaryMask, threshold: f64, dilation: usize) -> PyResult<PyBinaryMask> {
    raster::build_t0(&pred.0, &gt.0, threshold, dilation)
        .or_raise()
        .map(PyBinaryMask)
}

#[pyfunction]
#[pyo3(signature = (
    pred,
    gt,
    threshold = raster::DEFAULT_THRESHOLD,
    dilation = raster::DEFAULT_DILATION,
    cell = labelgen::DEFAULT_CELL,
    min_interruption = labelgen::DEFAULT_MIN_INTERRUPTION,
    levels = labelgen::DEFAULT_LEVELS,
))]
#[allow(clippy::too_many_arguments)]
fn build_label_pyramid(
    py: Python<'_>,
    pred: &PyProbabilityMap,
    gt: &PyBinaryMask,
    threshold: f64,
    dilation: usize,
    cell: usize,
    min_interruption: usize,
    levels: usize,
) -> PyResult<PyLabelPyramid> {
    let config = LabelConfig {
        threshold,
        dilation,
        cell,
        min_interruption,
        levels,
    };
    let (p, g) = (&pred.0, &gt.0);
    py.detach(|| labelgen::build_label_pyramid(g, p, &config))
        .or_raise()
        .map(PyLabelPyramid)
}

#[pyfunction]
fn mask_to_graph(py: Python<'_>, mask: &PyBinaryMask) -> PyRoadGraph {
    let m = &mask.0;
    PyRoadGraph(py.detach(|| graph::mask_to_graph(m)))
}

#[pyfunction]
#[pyo3(signature = (graph, width, height, thickness = 1))]
fn render_graph(graph: &PyRoadGraph, width: usize, height: usize, thickness: usize) -> PyResult<PyBinaryMask> {
    graph::render_graph(&graph.0, width, height, thickness)
        .or_raise()
        .map(PyBinaryMask)
}

/// Correctness, completeness and quality between mask skeletons.
#[pyfunction]
#[pyo3(signature = (pred, gt, tolerance = metrics::DEFAULT_CCQ_TOLERANCE))]
fn ccq(pred: &PyBinaryMask, gt: &PyBinaryMask, tolerance: f64) -> PyResult<BTreeMap<&'static str, f64>> {
    let r = metrics::ccq(&pred.0, &gt.0, tolerance).or_raise()?;
    Ok(BTreeMap::from([
        ("correctness", r.correctness),
        ("completeness", r.completeness),
        ("quality", r.quality),
    ]))
}

/// Pass `samples=None` to enumerate every connected pair.
#[pyfunction]
#[pyo3(signature = (
    pred,
    gt,
    samples = Some(metrics::DEFAULT_PATH_SAMPLES),
    seed = 0,
    rel_tol = metrics::DEFAULT_TLTS_REL_TOL,
    match_dist = graph::DEFAULT_MATCH_DIST,
))]
fn tlts(
    py: Python<'_>,
    pred: &PyRoadGraph,
    gt: &PyRoadGraph,
    samples: Option<usize>,
    seed: u64,
    rel_tol: f64,
    match_dist: f64,
) -> PyResult<f64> {
    let (p, g) = (&pred.0, &gt.0);
    py.detach(|| metrics::tlts(p, g, sampling(samples, seed), rel_tol, match_dist))
        .or_raise()
}

#[pyfunction]
#[pyo3(signature = (pred, gt, samples = Some(metrics::DEFAULT_PATH_SAMPLES), seed = 0, match_dist = graph::DEFAULT_MATCH_DIST))]
fn apls(
    py: Python<'_>,
    pred: &PyRoadGraph,
    gt: &PyRoadGraph,
    samples: Option<usize>,
    seed: u64,
    match_dist: f64,
) -> PyResult<f64> {
    let (p, g) = (&pred.0, &gt.0);
    py.detach(|| metrics::apls(p, g, sampling(samples, seed), match_dist))
        .or_raise()
}

#[pyfunction]
#[pyo3(signature = (
    pred,
    gt,
    match_dist = graph::DEFAULT_MATCH_DIST,
    max_angle_deg = metrics::DEFAULT_JUNCT_MAX_ANGLE_DEG,
    probe = metrics::DEFAULT_JUNCT_PROBE,
))]
fn junct(
    pred: &PyRoadGraph,
    gt: &PyRoadGraph,
    match_dist: f64,
    max_angle_deg: f64,
    probe: f64,
) -> BTreeMap<&'static str, f64> {
    let params = JunctParams {
        match_dist,
        max_angle_deg,
        probe,
    };
    pr_dict(metrics::junct(&pred.0, &gt.0, &params))
}

#[pyfunction]
#[pyo3(signature = (
    pred,
    gt,
    samples = Some(metrics::DEFAULT_HM_SAMPLES),
    seed = 0,
    radius = metrics::DEFAULT_HM_RADIUS,
    match_dist = graph::DEFAULT_MATCH_DIST,
    spacing = metrics::DEFAULT_HM_SPACING,
))]
#[allow(clippy::too_many_arguments)]
fn holes_and_marbles(
    py: Python<'_>,
    pred: &PyRoadGraph,
    gt: &PyRoadGraph,
    samples: Option<usize>,
    seed: u64,
    radius: f64,
    match_dist: f64,
    spacing: f64,
) -> PyResult<BTreeMap<&'static str, f64>> {
    let params = HolesMarblesParams {
        radius,
        match_dist,
        spacing,
    };
    let (p, g) = (&pred.0, &gt.0);
    py.detach(|| metrics::holes_and_marbles(p, g, sampling(samples, seed), &params))
        .or_raise()
        .map(pr_dict)
}

/// Parameter overrides from keyword arguments; unknown names are rejected.
fn params_from(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Params> {
    let mut doc = serde_json::to_value(Params::default()).expect("params serialize");
    if let Some(kwargs) = kwargs {
        for (k, v) in kwargs.iter() {
            let key: String = k.extract()?;
            let value = if v.is_instance_of::<PyBool>() {
                serde_json::Value::from(v.extract::<bool>()?)
            } else if let Ok(i) = v.extract::<u64>() {
                serde_json::Value::from(i)
            } else {
                serde_json::Value::from(v.extract::<f64>()?)
            };
            doc[key] = value;
        }
    }
    serde_json::from_value(doc).map_err(|e| PyValueError::new_err(format!("invalid parameters: {e}")))
}

/// Every metric at once. `gt` may be a mask or a graph; keyword arguments
/// override the same parameters the command line accepts.
#[pyfunction]
#[pyo3(signature = (pred, gt, **params))]
fn evaluate_all(
    py: Python<'_>,
    pred: &PyBinaryMask,
    gt: &Bound<'_, PyAny>,
    params: Option<&Bound<'_, PyDict>>,
) -> PyResult<BTreeMap<String, f64>> {
    let params = params_from(params)?;
    let p = &pred.0;
    let counts = if let Ok(m) = gt.extract::<PyRef<'_, PyBinaryMask>>() {
        let m = &m.0;
        py.detach(|| metrics::evaluate_all(p, GroundTruth::Mask(m), &params))
    } else {
        let g = gt.extract::<PyRef<'_, PyRoadGraph>>()?;
        let g = &g.0;
        py.detach(|| metrics::evaluate_all(p, GroundTruth::Graph(g), &params))
    }
    .or_raise()?;
    Ok(counts.metrics())
}

fn loss_options(normalize: bool, eps: f64) -> LossOptions {
    LossOptions { eps, normalize }
}

fn grid_rows(g: &Option<raster::RealGrid>) -> Option<Vec<Vec<f64>>> {
    g.as_ref().map(|g| unflatten(g.values(), g.dims().0))
}

fn pyramid_grad(g: &Option<Vec<Vec<f64>>>, shape: &losses::OutputPyramid) -> Option<Vec<Vec<Vec<f64>>>> {
    g.as_ref().map(|levels| {
        levels
            .iter()
            .zip(shape.levels())
            .map(|(v, l)| unflatten(v, l.cols))
            .collect()
    })
}

type Polyline = Vec<(f64, f64)>;
type GradRows = Option<Vec<Vec<f64>>>;
type PyramidRows = Option<Vec<Vec<Vec<f64>>>>;

/// Returns `(loss, grad)` where `grad` has the prediction's shape.
#[pyfunction]
#[pyo3(signature = (pred, gt, normalize = false, eps = losses::DEFAULT_EPS))]
fn bce_loss(pred: &PyProbabilityMap, gt: &PyBinaryMask, normalize: bool, eps: f64) -> PyResult<(f64, GradRows)> {
    let LossValue { loss, grad_pred, .. } =
        losses::bce_loss(&pred.0, &gt.0, true, &loss_options(normalize, eps)).or_raise()?;
    Ok((loss, grid_rows(&grad_pred)))
}

/// Returns `(loss, grad_pred, grad_d_fake)`.
#[pyfunction]
#[pyo3(signature = (pred, gt, d_fake, lambda_a = losses::DEFAULT_LAMBDA_A, normalize = false, eps = losses::DEFAULT_EPS))]
fn generator_loss(
    pred: &PyProbabilityMap,
    gt: &PyBinaryMask,
    d_fake: &PyOutputPyramid,
    lambda_a: f64,
    normalize: bool,
    eps: f64,
) -> PyResult<(f64, GradRows, PyramidRows)> {
    let v = losses::generator_loss(&pred.0, &gt.0, &d_fake.0, lambda_a, &loss_options(normalize, eps)).or_raise()?;
    Ok((v.loss, grid_rows(&v.grad_pred), pyramid_grad(&v.grad_d_fake, &d_fake.0)))
}

/// Returns `(loss, grad_d_fake, grad_d_real)`.
#[pyfunction]
#[pyo3(signature = (d_fake, labels, d_real, normalize = false, eps = losses::DEFAULT_EPS))]
fn discriminator_loss(
    d_fake: &PyOutputPyramid,
    labels: &PyLabelPyramid,
    d_real: &PyOutputPyramid,
    normalize: bool,
    eps: f64,
) -> PyResult<(f64, PyramidRows, PyramidRows)> {
    let v = losses::discriminator_loss(&d_fake.0, &labels.0, &d_real.0, &loss_options(normalize, eps)).or_raise()?;
    Ok((
        v.loss,
        pyramid_grad(&v.grad_d_fake, &d_fake.0),
        pyramid_grad(&v.grad_d_real, &d_real.0),
    ))
}

#[pymodule]
#[pyo3(name = "roadtopo")]
fn roadtopo_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", io::TOOL_VERSION)?;
    m.add("FORMAT_VERSION", io::FORMAT_VERSION)?;
    m.add_class::<PyBinaryMask>()?;
    m.add_class::<PyProbabilityMap>()?;
    m.add_class::<PyRoadGraph>()?;
    m.add_class::<PyLabelPyramid>()?;
    m.add_class::<PyOutputPyramid>()?;
    m.add_function(wrap_pyfunction!(threshold, m)?)?;
    m.add_function(wrap_pyfunction!(dilate, m)?)?;
    m.add_function(wrap_pyfunction!(skeletonize, m)?)?;
    m.add_function(wrap_pyfunction!(build_t0, m)?)?;
    m.add_function(wrap_pyfunction!(build_label_pyramid, m)?)?;
    m.add_function(wrap_pyfunction!(mask_to_graph, m)?)?;
    m.add_function(wrap_pyfunction!(render_graph, m)?)?;
    m.add_function(wrap_pyfunction!(ccq, m)?)?;
    m.add_function(wrap_pyfunction!(tlts, m)?)?;
    m.add_function(wrap_pyfunction!(apls, m)?)?;
    m.add_function(wrap_pyfunction!(junct, m)?)?;
    m.add_function(wrap_pyfunction!(holes_and_marbles, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_all, m)?)?;
    m.add_function(wrap_pyfunction!(bce_loss, m)?)?;
    m.add_function(wrap_pyfunction!(generator_loss, m)?)?;
    m.add_function(wrap_pyfunction!(discriminator_loss, m)?)?;
    Ok(())
}
