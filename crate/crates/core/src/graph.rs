//! Undirected geometric road graphs.
//!
//! Coordinates are in pixels with integer values at pixel centres, x to the
//! right and y downward. An edge may carry interior polyline vertices (chains
//! contracted out of a skeleton keep their shape); its length is always the
//! polyline length, which for a plain edge is the Euclidean distance between
//! its endpoints.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{self, BinaryMask};

pub type NodeId = usize;

/// Default node matching distance in pixels.
pub const DEFAULT_MATCH_DIST: f64 = 25.0;

const EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist2(self, other: Point) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        dx * dx + dy * dy
    }

    fn lerp(self, other: Point, f: f64) -> Point {
        Point::new(self.x + (other.x - self.x) * f, self.y + (other.y - self.y) * f)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
    /// Interior vertices ordered from `a` to `b`.
    pub via: Vec<Point>,
    pub length: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoadGraph {
    points: Vec<Point>,
    edges: Vec<Edge>,
    /// Per node: `(neighbour, edge index)` sorted by neighbour.
    adj: Vec<Vec<(NodeId, usize)>>,
}

/// A source/target pair for a shortest-path query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PathQuery {
    pub source: NodeId,
    pub target: NodeId,
}

fn polyline_length(pts: &[Point]) -> f64 {
    pts.windows(2).map(|w| w[0].dist(w[1])).sum()
}

impl RoadGraph {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Graph with straight edges.
    pub fn new(points: Vec<Point>, edges: &[(NodeId, NodeId)]) -> Result<Self> {
        Self::with_polylines(points, edges.iter().map(|&(a, b)| (a, b, Vec::new())).collect())
    }

    /// Graph whose edges may carry interior vertices (ordered from the first
    /// endpoint to the second).
    pub fn with_polylines(points: Vec<Point>, edges: Vec<(NodeId, NodeId, Vec<Point>)>) -> Result<Self> {
        let n = points.len();
        if let Some(p) = points.iter().find(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::Domain(format!("non-finite node coordinate {p:?}")));
        }
        let mut adj: Vec<Vec<(NodeId, usize)>> = vec![Vec::new(); n];
        let mut out = Vec::with_capacity(edges.len());
        for (a, b, via) in edges {
            if a >= n || b >= n {
                return Err(Error::Reference(format!(
                    "edge ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::Format(format!("self-loop on node {a}")));
            }
            let mut pts = Vec::with_capacity(via.len() + 2);
            pts.push(points[a]);
            pts.extend_from_slice(&via);
            pts.push(points[b]);
            let length = polyline_length(&pts);
            if length <= 0.0 {
                return Err(Error::Domain(format!("edge ({a}, {b}) has zero length")));
            }
            let idx = out.len();
            adj[a].push((b, idx));
            adj[b].push((a, idx));
            out.push(Edge { a, b, via, length });
        }
        for (v, list) in adj.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::Format(format!("duplicate edge ({v}, {})", w[0].0)));
            }
        }
        Ok(Self {
            points,
            edges: out,
            adj,
        })
    }

    pub fn node_count(&self) -> usize {
        self.points.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, v: NodeId) -> Point {
        self.points[v]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// `(neighbour, edge index)` pairs sorted by neighbour id.
    pub fn neighbors(&self, v: NodeId) -> &[(NodeId, usize)] {
        &self.adj[v]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adj[v].len()
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    fn check_node(&self, v: NodeId) -> Result<()> {
        if v >= self.points.len() {
            return Err(Error::Domain(format!(
                "node {v} does not exist (graph has {} nodes)",
                self.points.len()
            )));
        }
        Ok(())
    }

    /// Full vertex list of an edge oriented to start at `from`.
    pub fn edge_polyline(&self, e: usize, from: NodeId) -> Vec<Point> {
        let edge = &self.edges[e];
        let mut pts = Vec::with_capacity(edge.via.len() + 2);
        pts.push(self.points[edge.a]);
        pts.extend_from_slice(&edge.via);
        pts.push(self.points[edge.b]);
        if from == edge.b {
            pts.reverse();
        }
        pts
    }

    /// Connected component index per node; components are numbered in order of
    /// their smallest node id.
    pub fn components(&self) -> Vec<usize> {
        let n = self.node_count();
        let mut comp = vec![usize::MAX; n];
        let mut next = 0;
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = next;
            let mut stack = vec![s];
            while let Some(v) = stack.pop() {
                for &(w, _) in &self.adj[v] {
                    if comp[w] == usize::MAX {
                        comp[w] = next;
                        stack.push(w);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    pub fn component_count(&self) -> usize {
        self.components().iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn scaled(&self, factor: f64) -> RoadGraph {
        self.map_points(|p| Point::new(p.x * factor, p.y * factor))
    }

    pub fn translated(&self, dx: f64, dy: f64) -> RoadGraph {
        self.map_points(|p| Point::new(p.x + dx, p.y + dy))
    }

    fn map_points(&self, f: impl Fn(Point) -> Point) -> RoadGraph {
        let points: Vec<Point> = self.points.iter().map(|&p| f(p)).collect();
        let edges: Vec<Edge> = self
            .edges
            .iter()
            .map(|e| {
                let via: Vec<Point> = e.via.iter().map(|&p| f(p)).collect();
                let mut pts = vec![points[e.a]];
                pts.extend_from_slice(&via);
                pts.push(points[e.b]);
                Edge {
                    a: e.a,
                    b: e.b,
                    via,
                    length: polyline_length(&pts),
                }
            })
            .collect();
        RoadGraph {
            points,
            edges,
            adj: self.adj.clone(),
        }
    }

    /// Single-source shortest-path distances; nodes farther than `limit`
    /// (when given) or unreachable are `None`.
    pub fn distances(&self, source: NodeId, limit: Option<f64>) -> Result<Vec<Option<f64>>> {
        self.check_node(source)?;
        Ok(self.dijkstra(source, limit, None))
    }

    fn dijkstra(&self, source: NodeId, limit: Option<f64>, target: Option<NodeId>) -> Vec<Option<f64>> {
        let n = self.node_count();
        let mut best = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        best[source] = 0.0;
        heap.push(HeapEntry {
            dist: 0.0,
            node: source,
        });
        while let Some(HeapEntry { dist, node }) = heap.pop() {
            if done[node] {
                continue;
            }
            done[node] = true;
            if Some(node) == target {
                break;
            }
            for &(w, e) in &self.adj[node] {
                let nd = dist + self.edges[e].length;
                if limit.is_some_and(|l| nd > l + EPS) {
                    continue;
                }
                if nd < best[w] {
                    best[w] = nd;
                    heap.push(HeapEntry { dist: nd, node: w });
                }
            }
        }
        best.iter().map(|&d| d.is_finite().then_some(d)).collect()
    }

    /// Exact shortest-path length, `None` when the target is unreachable.
    pub fn shortest_path_length(&self, q: PathQuery) -> Result<Option<f64>> {
        self.check_node(q.source)?;
        self.check_node(q.target)?;
        if q.source == q.target {
            return Ok(Some(0.0));
        }
        Ok(self.dijkstra(q.source, None, Some(q.target))[q.target])
    }

    /// Nearest node within `max_dist` (inclusive); ties go to the smaller id.
    pub fn snap_node(&self, p: Point, max_dist: f64) -> Option<NodeId> {
        let mut best: Option<(f64, NodeId)> = None;
        let limit = max_dist * max_dist;
        for (id, q) in self.points.iter().enumerate() {
            let d = q.dist2(p);
            if d <= limit && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, id));
            }
        }
        best.map(|(_, id)| id)
    }

    /// Nodes of degree three or more, ascending.
    pub fn junctions(&self) -> Vec<NodeId> {
        (0..self.node_count()).filter(|&v| self.degree(v) >= 3).collect()
    }

    /// Part of the graph within geodesic distance `radius` of `center`.
    ///
    /// Original nodes inside the radius keep their relative order and come
    /// first; edges leaving the ball are cut at the radius point, where a new
    /// boundary node is inserted.
    pub fn subgraph_within(&self, center: NodeId, radius: f64) -> Result<Subgraph> {
        self.check_node(center)?;
        if radius.is_nan() || radius < 0.0 {
            return Err(Error::Domain(format!("radius {radius} must be non-negative")));
        }
        let dist = self.dijkstra(center, Some(radius), None);
        let mut new_id = vec![usize::MAX; self.node_count()];
        let mut points = Vec::new();
        let mut origin = Vec::new();
        for (v, d) in dist.iter().enumerate() {
            if d.is_some() {
                new_id[v] = points.len();
                points.push(self.points[v]);
                origin.push(Some(v));
            }
        }
        let mut edges = Vec::new();
        for (e, edge) in self.edges.iter().enumerate() {
            let reach = |v: NodeId| dist[v].map(|d| radius - d);
            match (reach(edge.a), reach(edge.b)) {
                (Some(ra), Some(rb)) if ra + rb >= edge.length - EPS => {
                    edges.push((new_id[edge.a], new_id[edge.b], edge.via.clone()));
                }
                (ra, rb) => {
                    for (v, r) in [(edge.a, ra), (edge.b, rb)] {
                        let Some(r) = r.filter(|&r| r > EPS) else { continue };
                        let pts = self.edge_polyline(e, v);
                        let mut stub = truncate_polyline(&pts, r.min(edge.length));
                        let end = stub.pop().unwrap();
                        let boundary = points.len();
                        points.push(end);
                        origin.push(None);
                        edges.push((new_id[v], boundary, stub[1..].to_vec()));
                    }
                }
            }
        }
        let graph = RoadGraph::with_polylines(points, edges)?;
        Ok(Subgraph {
            center: new_id[center],
            graph,
            origin,
        })
    }

    /// Points at geodesic distances `0, spacing, 2 spacing, ...` (up to
    /// `max_dist`) from `start`, over every reachable edge, interpolated along
    /// edge geometry. Points closer than `spacing / 2` to an earlier one are
    /// dropped.
    pub fn walk_points(&self, start: NodeId, max_dist: f64, spacing: f64) -> Result<Vec<Point>> {
        self.check_node(start)?;
        if spacing.is_nan() || spacing <= 0.0 {
            return Err(Error::Domain(format!("spacing {spacing} must be positive")));
        }
        let dist = self.dijkstra(start, Some(max_dist), None);
        let mut raw = vec![self.points[start]];
        for (e, edge) in self.edges.iter().enumerate() {
            for (u, v) in [(edge.a, edge.b), (edge.b, edge.a)] {
                let Some(du) = dist[u] else { continue };
                let dv = dist[v].unwrap_or(f64::INFINITY);
                // Beyond the midpoint in geodesic terms the point is reached from `v`.
                let t_max = edge.length.min((dv + edge.length - du) / 2.0);
                let pts = self.edge_polyline(e, u);
                let mut k = ((du - EPS) / spacing).ceil().max(0.0);
                loop {
                    let g = k * spacing;
                    let t = g - du;
                    if g > max_dist + EPS || t > t_max + EPS {
                        break;
                    }
                    raw.push(point_along(&pts, t.clamp(0.0, edge.length)));
                    k += 1.0;
                }
            }
        }
        Ok(dedup_points(&raw, spacing / 2.0))
    }
}

/// Result of [`RoadGraph::subgraph_within`].
#[derive(Clone, Debug, PartialEq)]
pub struct Subgraph {
    pub graph: RoadGraph,
    /// Id of the centre node in `graph`.
    pub center: NodeId,
    /// Original node id per subgraph node; `None` for inserted boundary nodes.
    pub origin: Vec<Option<NodeId>>,
}

#[derive(Clone, Copy, Debug)]
struct HeapEntry {
    dist: f64,
    node: NodeId,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    // Min-heap on (dist, node).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Point at arc length `t` along a polyline.
pub fn point_along(pts: &[Point], t: f64) -> Point {
    let mut remaining = t;
    for w in pts.windows(2) {
        let seg = w[0].dist(w[1]);
        if remaining <= seg {
            return if seg > 0.0 {
                w[0].lerp(w[1], remaining / seg)
            } else {
                w[0]
            };
        }
        remaining -= seg;
    }
    *pts.last().unwrap()
}

/// Prefix of a polyline up to arc length `t`, ending at the cut point.
fn truncate_polyline(pts: &[Point], t: f64) -> Vec<Point> {
    let mut out = vec![pts[0]];
    let mut remaining = t;
    for w in pts.windows(2) {
        let seg = w[0].dist(w[1]);
        if remaining < seg {
            out.push(w[0].lerp(w[1], remaining / seg));
            return out;
        }
        remaining -= seg;
        out.push(w[1]);
    }
    out
}

fn dedup_points(points: &[Point], min_sep: f64) -> Vec<Point> {
    let cell = min_sep.max(EPS);
    let key = |p: Point| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut kept: Vec<Point> = Vec::new();
    let sep2 = min_sep * min_sep;
    for &p in points {
        let (cx, cy) = key(p);
        let clash = (-1..=1).any(|dx| {
            (-1..=1).any(|dy| {
                grid.get(&(cx + dx, cy + dy))
                    .is_some_and(|ids| ids.iter().any(|&i| kept[i].dist2(p) < sep2))
            })
        });
        if !clash {
            grid.entry((cx, cy)).or_default().push(kept.len());
            kept.push(p);
        }
    }
    kept
}

/// Centre-line graph of a mask.
///
/// The mask is skeletonized; every skeleton pixel becomes a node joined to its
/// 4-neighbours and to diagonal neighbours not already linked through a
/// shared 4-neighbour. Degree-2 nodes are then contracted into polyline edges
/// whenever that creates neither a self-loop nor a parallel edge, so junctions
/// and terminals survive and an isolated cycle shrinks to a triangle.
pub fn mask_to_graph(m: &BinaryMask) -> RoadGraph {
    pixel_graph(&raster::skeletonize(m)).contracted()
}

/// Pixel-adjacency graph of an already thin mask (no skeletonization and no
/// contraction).
pub fn pixel_graph(skeleton: &BinaryMask) -> RoadGraph {
    let (w, h) = skeleton.dims();
    let mut id = vec![u32::MAX; w * h];
    let mut points = Vec::new();
    for (x, y) in skeleton.ones_iter() {
        id[y * w + x] = points.len() as u32;
        points.push(Point::new(x as f64, y as f64));
    }
    let on = |x: isize, y: isize| skeleton.get_signed(x, y);
    let mut edges = Vec::new();
    for (x, y) in skeleton.ones_iter() {
        let (xi, yi) = (x as isize, y as isize);
        let me = id[y * w + x] as usize;
        let mut link = |nx: isize, ny: isize| {
            edges.push((me, id[ny as usize * w + nx as usize] as usize));
        };
        if on(xi + 1, yi) {
            link(xi + 1, yi);
        }
        if on(xi, yi + 1) {
            link(xi, yi + 1);
        }
        if on(xi + 1, yi + 1) && !on(xi + 1, yi) && !on(xi, yi + 1) {
            link(xi + 1, yi + 1);
        }
        if on(xi - 1, yi + 1) && !on(xi - 1, yi) && !on(xi, yi + 1) {
            link(xi - 1, yi + 1);
        }
    }
    RoadGraph::new(points, &edges).expect("pixel adjacency is a simple graph")
}

impl RoadGraph {
    /// Contracts degree-2 nodes into polyline edges (see [`mask_to_graph`]).
    pub fn contracted(&self) -> RoadGraph {
        struct Work {
            a: NodeId,
            b: NodeId,
            via: Vec<Point>,
        }
        let n = self.node_count();
        let mut edges: Vec<Option<Work>> = self
            .edges
            .iter()
            .map(|e| {
                Some(Work {
                    a: e.a,
                    b: e.b,
                    via: e.via.clone(),
                })
            })
            .collect();
        let mut adj: Vec<Vec<(NodeId, usize)>> = self.adj.clone();
        let mut alive = vec![true; n];
        for v in 0..n {
            if adj[v].len() != 2 {
                continue;
            }
            let (u, e1) = adj[v][0];
            let (x, e2) = adj[v][1];
            if u == x || adj[u].iter().any(|&(t, _)| t == x) {
                continue;
            }
            let oriented = |e: usize, from: NodeId, edges: &[Option<Work>]| -> Vec<Point> {
                let w = edges[e].as_ref().unwrap();
                let mut pts = w.via.clone();
                if w.b == from {
                    pts.reverse();
                }
                pts
            };
            // u -> v -> x
            let mut via = oriented(e1, u, &edges);
            via.push(self.points[v]);
            via.extend(oriented(e2, v, &edges));
            edges[e1] = None;
            edges[e2] = None;
            let idx = edges.len();
            edges.push(Some(Work { a: u, b: x, via }));
            alive[v] = false;
            adj[v].clear();
            for (end, old, other) in [(u, e1, x), (x, e2, u)] {
                let slot = adj[end].iter_mut().find(|(_, e)| *e == old).unwrap();
                *slot = (other, idx);
            }
        }
        let mut new_id = vec![usize::MAX; n];
        let mut points = Vec::new();
        for v in (0..n).filter(|&v| alive[v]) {
            new_id[v] = points.len();
            points.push(self.points[v]);
        }
        let mut out: Vec<(NodeId, NodeId, Vec<Point>)> = edges
            .into_iter()
            .flatten()
            .map(|w| {
                let (a, b) = (new_id[w.a], new_id[w.b]);
                if a <= b {
                    (a, b, w.via)
                } else {
                    let mut via = w.via;
                    via.reverse();
                    (b, a, via)
                }
            })
            .collect();
        out.sort_by_key(|p| (p.0, p.1));
        RoadGraph::with_polylines(points, out).expect("contraction keeps the graph simple")
    }
}

/// Rasterizes every edge with supercover lines, then grows them to the given
/// thickness (Chebyshev radius `thickness / 2`). Isolated nodes are drawn as
/// points. Geometry outside the canvas is clipped.
pub fn render_graph(g: &RoadGraph, width: usize, height: usize, thickness: usize) -> Result<BinaryMask> {
    if width == 0 || height == 0 {
        return Err(Error::Domain(format!("canvas {width}x{height} must be non-empty")));
    }
    if thickness == 0 {
        return Err(Error::Domain("line thickness must be at least 1".into()));
    }
    let mut m = BinaryMask::zeros(width, height);
    for e in 0..g.edge_count() {
        let pts = g.edge_polyline(e, g.edges[e].a);
        for w in pts.windows(2) {
            supercover(&mut m, w[0], w[1]);
        }
    }
    for v in 0..g.node_count() {
        if g.degree(v) == 0 {
            supercover(&mut m, g.points[v], g.points[v]);
        }
    }
    Ok(raster::dilate(&m, thickness / 2))
}

/// Sets every pixel whose closed unit square (centred on integer coordinates)
/// the segment touches.
fn supercover(m: &mut BinaryMask, p: Point, q: Point) {
    let transpose = (q.y - p.y).abs() > (q.x - p.x).abs();
    let (p, q) = if transpose {
        (Point::new(p.y, p.x), Point::new(q.y, q.x))
    } else {
        (p, q)
    };
    let (major_len, minor_len) = if transpose {
        (m.height(), m.width())
    } else {
        (m.width(), m.height())
    };
    let (p, q) = if p.x <= q.x { (p, q) } else { (q, p) };
    let y_at = |x: f64| {
        if q.x - p.x > 0.0 {
            p.y + (q.y - p.y) * (x - p.x) / (q.x - p.x)
        } else {
            p.y
        }
    };
    let i_lo = (p.x - 0.5).ceil().max(0.0);
    let i_hi = (q.x + 0.5).floor().min(major_len as f64 - 1.0);
    let mut i = i_lo;
    while i <= i_hi {
        let (x0, x1) = ((i - 0.5).max(p.x), (i + 0.5).min(q.x));
        let (ya, yb) = if q.x > p.x { (y_at(x0), y_at(x1)) } else { (p.y, q.y) };
        let (ylo, yhi) = (ya.min(yb), ya.max(yb));
        let j_lo = (ylo - 0.5).ceil().max(0.0);
        let j_hi = (yhi + 0.5).floor().min(minor_len as f64 - 1.0);
        let mut j = j_lo;
        while j <= j_hi {
            let (x, y) = if transpose { (j, i) } else { (i, j) };
            m.set(x as usize, y as usize, true);
            j += 1.0;
        }
        i += 1.0;
    }
}

/// Unit direction from `v` along the road through edge `e`, measured at arc
/// length `probe` (following degree-2 continuations) or at the road's end if
/// it is shorter.
pub fn road_direction(g: &RoadGraph, v: NodeId, e: usize, probe: f64) -> Point {
    let origin = g.point(v);
    let mut remaining = probe;
    let (mut at, mut edge) = (v, e);
    let mut hops = 0;
    let target = loop {
        let pts = g.edge_polyline(edge, at);
        let len = g.edges[edge].length;
        let next = if g.edges[edge].a == at {
            g.edges[edge].b
        } else {
            g.edges[edge].a
        };
        if remaining <= len {
            break point_along(&pts, remaining);
        }
        remaining -= len;
        hops += 1;
        if g.degree(next) != 2 || next == v || hops > g.edge_count() {
            break g.point(next);
        }
        let &(_, follow) = g.adj[next].iter().find(|&&(_, f)| f != edge).unwrap();
        at = next;
        edge = follow;
    };
    let (dx, dy) = (target.x - origin.x, target.y - origin.y);
    let norm = dx.hypot(dy);
    if norm > 0.0 {
        Point::new(dx / norm, dy / norm)
    } else {
        Point::new(0.0, 0.0)
    }
}
