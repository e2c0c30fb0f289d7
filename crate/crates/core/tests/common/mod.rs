//! Fixtures and brute-force reference implementations shared by the
//! integration tests. Oracles here avoid the library's own algorithms: all-pairs
//! distances come from Floyd-Warshall, nearest-point queries are linear scans.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roadtopo::graph::NodeId;
use roadtopo::metrics::CcqCounts;
use roadtopo::{BinaryMask, Point, RoadGraph};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform random mask with the given foreground density.
pub fn noise_mask(r: &mut ChaCha8Rng, w: usize, h: usize, density: f64) -> BinaryMask {
    BinaryMask::new(w, h, (0..w * h).map(|_| r.gen_bool(density)).collect()).unwrap()
}

/// Draws a straight stroke of Chebyshev half-width `half` from `a` to `b`.
pub fn stroke(m: &mut BinaryMask, a: (f64, f64), b: (f64, f64), half: isize) {
    let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()) * 2.0).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let cx = (a.0 + (b.0 - a.0) * t).round() as isize;
        let cy = (a.1 + (b.1 - a.1) * t).round() as isize;
        for dy in -half..=half {
            for dx in -half..=half {
                let (x, y) = (cx + dx, cy + dy);
                if x >= 0 && y >= 0 && (x as usize) < m.width() && (y as usize) < m.height() {
                    m.set(x as usize, y as usize, true);
                }
            }
        }
    }
}

/// A road-like mask: a handful of random thick strokes, chained so that the
/// network is mostly connected.
pub fn road_mask(r: &mut ChaCha8Rng, w: usize, h: usize, strokes: usize) -> BinaryMask {
    let mut m = BinaryMask::zeros(w, h);
    let mut p = (r.gen_range(0.0..w as f64), r.gen_range(0.0..h as f64));
    for _ in 0..strokes {
        let q = (r.gen_range(0.0..w as f64), r.gen_range(0.0..h as f64));
        let half = r.gen_range(0..3);
        stroke(&mut m, p, q, half);
        p = if r.gen_bool(0.7) {
            q
        } else {
            (r.gen_range(0.0..w as f64), r.gen_range(0.0..h as f64))
        };
    }
    m
}

/// Mixed small masks for CCQ and morphology checks.
pub fn random_mask(r: &mut ChaCha8Rng, w: usize, h: usize) -> BinaryMask {
    match r.gen_range(0..4) {
        0 => {
            let density = r.gen_range(0.0..0.6);
            noise_mask(r, w, h, density)
        }
        1 => {
            let strokes = r.gen_range(1..5);
            road_mask(r, w, h, strokes)
        }
        2 => {
            let strokes = r.gen_range(1..4);
            let mut m = road_mask(r, w, h, strokes);
            let n = noise_mask(r, w, h, 0.05);
            for (x, y) in n.ones_iter() {
                m.set(x, y, !m.get(x, y));
            }
            m
        }
        _ => BinaryMask::zeros(w, h),
    }
}

/// Random simple graph with `n` distinct nodes in a `side` x `side` box; roughly
/// a spanning tree plus a few extra chords, optionally split into components.
pub fn random_graph(r: &mut ChaCha8Rng, n: usize, side: f64) -> RoadGraph {
    let mut points: Vec<Point> = Vec::with_capacity(n);
    while points.len() < n {
        let p = Point::new(r.gen_range(0.0..side), r.gen_range(0.0..side));
        if points.iter().all(|q| q.dist(p) > 1.0) {
            points.push(p);
        }
    }
    let mut edges = Vec::new();
    let has = |edges: &Vec<(usize, usize)>, a: usize, b: usize| {
        edges.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a))
    };
    for v in 1..n {
        if r.gen_bool(0.9) {
            let u = r.gen_range(0..v);
            edges.push((u, v));
        }
    }
    for _ in 0..n / 3 {
        let (a, b) = (r.gen_range(0..n), r.gen_range(0..n));
        if a != b && !has(&edges, a, b) {
            edges.push((a, b));
        }
    }
    RoadGraph::new(points, &edges).unwrap()
}

/// A perturbed copy of `g`: nodes jittered, some edges dropped, maybe an
/// extra node and edge.
pub fn perturbed(r: &mut ChaCha8Rng, g: &RoadGraph, jitter: f64) -> RoadGraph {
    let mut points: Vec<Point> = g
        .points()
        .iter()
        .map(|p| Point::new(p.x + r.gen_range(-jitter..=jitter), p.y + r.gen_range(-jitter..=jitter)))
        .collect();
    let mut edges: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .filter(|_| r.gen_bool(0.8))
        .map(|e| (e.a, e.b))
        .collect();
    if r.gen_bool(0.5) && !points.is_empty() {
        let anchor = r.gen_range(0..points.len());
        let p = points[anchor];
        points.push(Point::new(p.x + r.gen_range(5.0..40.0), p.y + r.gen_range(5.0..40.0)));
        edges.push((anchor, points.len() - 1));
    }
    RoadGraph::new(points, &edges).unwrap()
}

/// All-pairs shortest path lengths; `INFINITY` when disconnected.
pub fn floyd_warshall(g: &RoadGraph) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (v, row) in d.iter_mut().enumerate() {
        row[v] = 0.0;
    }
    for e in g.edges() {
        d[e.a][e.b] = d[e.a][e.b].min(e.length);
        d[e.b][e.a] = d[e.b][e.a].min(e.length);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Nearest node within `max_dist` by linear scan; ties to the smaller id.
pub fn brute_snap(g: &RoadGraph, p: Point, max_dist: f64) -> Option<NodeId> {
    let mut best = None;
    let mut best_d = f64::INFINITY;
    for (v, q) in g.points().iter().enumerate() {
        let d = ((q.x - p.x).powi(2) + (q.y - p.y).powi(2)).sqrt();
        if d <= max_dist && d < best_d {
            best = Some(v);
            best_d = d;
        }
    }
    best
}

/// Unordered connected pairs `a < b`.
#[allow(clippy::needless_range_loop)]
pub fn connected_pairs(d: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let n = d.len();
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if d[a][b].is_finite() {
                out.push((a, b));
            }
        }
    }
    out
}

/// Fraction of connected ground-truth pairs whose matched prediction path is
/// within `rel_tol` of the ground-truth length.
pub fn oracle_tlts(pred: &RoadGraph, gt: &RoadGraph, rel_tol: f64, match_dist: f64) -> f64 {
    let dg = floyd_warshall(gt);
    let dp = floyd_warshall(pred);
    let pairs = connected_pairs(&dg);
    let mut correct = 0usize;
    for &(a, b) in &pairs {
        let sa = brute_snap(pred, gt.points()[a], match_dist);
        let sb = brute_snap(pred, gt.points()[b], match_dist);
        if let (Some(sa), Some(sb)) = (sa, sb) {
            let l = dp[sa][sb];
            if l.is_finite() && (l - dg[a][b]).abs() <= rel_tol * dg[a][b] {
                correct += 1;
            }
        }
    }
    if pairs.is_empty() {
        0.0
    } else {
        correct as f64 / pairs.len() as f64
    }
}

fn oracle_apls_direction(reference: &RoadGraph, other: &RoadGraph, match_dist: f64) -> f64 {
    let dr = floyd_warshall(reference);
    let dothers = floyd_warshall(other);
    let pairs = connected_pairs(&dr);
    if pairs.is_empty() {
        return 0.0;
    }
    let mut penalty = 0.0;
    for &(a, b) in &pairs {
        let sa = brute_snap(other, reference.points()[a], match_dist);
        let sb = brute_snap(other, reference.points()[b], match_dist);
        penalty += match (sa, sb) {
            (Some(sa), Some(sb)) if dothers[sa][sb].is_finite() => {
                ((dr[a][b] - dothers[sa][sb]).abs() / dr[a][b]).min(1.0)
            }
            _ => 1.0,
        };
    }
    1.0 - penalty / pairs.len() as f64
}

pub fn oracle_apls(pred: &RoadGraph, gt: &RoadGraph, match_dist: f64) -> f64 {
    let a = oracle_apls_direction(gt, pred, match_dist);
    let b = oracle_apls_direction(pred, gt, match_dist);
    if a <= 0.0 || b <= 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Control points around `start`: for each edge side `u -> v` (edges in order,
/// `a` side first), the points at arc length `t` with `d(u) + t = k * spacing`
/// that are no farther than `radius` and for which the route through `u` is a
/// shortest one; then dropped if within `spacing / 2` of an earlier point.
pub fn oracle_walk(g: &RoadGraph, d: &[Vec<f64>], start: NodeId, radius: f64, spacing: f64) -> Vec<Point> {
    const TOL: f64 = 1e-9;
    let mut raw = vec![g.points()[start]];
    for e in g.edges() {
        for (u, v) in [(e.a, e.b), (e.b, e.a)] {
            let (du, dv) = (d[start][u], d[start][v]);
            if du > radius + TOL {
                continue;
            }
            let (pu, pv) = (g.points()[u], g.points()[v]);
            let mut k = 0.0f64;
            while k * spacing <= radius + TOL {
                let t = k * spacing - du;
                k += 1.0;
                if t < -TOL || t > e.length + TOL {
                    continue;
                }
                if du + t > dv + e.length - t + TOL {
                    continue;
                }
                let s = (t / e.length).clamp(0.0, 1.0);
                raw.push(Point::new(pu.x + (pv.x - pu.x) * s, pu.y + (pv.y - pu.y) * s));
            }
        }
    }
    let mut kept: Vec<Point> = Vec::new();
    let half = spacing / 2.0;
    for p in raw {
        if kept.iter().all(|q| q.dist2(p) >= half * half) {
            kept.push(p);
        }
    }
    kept
}

fn near_count(items: &[Point], targets: &[Point], dist: f64) -> usize {
    items
        .iter()
        .filter(|p| targets.iter().any(|q| q.dist2(**p) <= dist * dist))
        .count()
}

/// Pooled `(holes, matched_holes, marbles, matched_marbles)` over every start
/// node of the ground truth.
pub fn oracle_holes_marbles(
    pred: &RoadGraph,
    gt: &RoadGraph,
    radius: f64,
    spacing: f64,
    match_dist: f64,
) -> (usize, usize, usize, usize) {
    let dg = floyd_warshall(gt);
    let dp = floyd_warshall(pred);
    let mut totals = (0, 0, 0, 0);
    for start in 0..gt.node_count() {
        let holes = oracle_walk(gt, &dg, start, radius, spacing);
        totals.0 += holes.len();
        let Some(s) = brute_snap(pred, gt.points()[start], match_dist) else {
            continue;
        };
        let marbles = oracle_walk(pred, &dp, s, radius, spacing);
        totals.1 += near_count(&holes, &marbles, match_dist);
        totals.2 += marbles.len();
        totals.3 += near_count(&marbles, &holes, match_dist);
    }
    totals
}

/// CCQ counts on two skeletons by exhaustive pixel-pair distances.
pub fn oracle_ccq_counts(pred_skel: &BinaryMask, gt_skel: &BinaryMask, tol: f64) -> CcqCounts {
    let p: Vec<(usize, usize)> = pred_skel.ones_iter().collect();
    let g: Vec<(usize, usize)> = gt_skel.ones_iter().collect();
    let within = |a: (usize, usize), set: &[(usize, usize)]| {
        set.iter().any(|&b| {
            let dx = a.0 as f64 - b.0 as f64;
            let dy = a.1 as f64 - b.1 as f64;
            (dx * dx + dy * dy).sqrt() <= tol
        })
    };
    CcqCounts {
        matched_pred: p.iter().filter(|&&a| within(a, &g)).count(),
        matched_gt: g.iter().filter(|&&a| within(a, &p)).count(),
        pred: p.len(),
        gt: g.len(),
    }
}

/// Correctness, completeness and quality from raw counts, with the empty-set
/// conventions written out longhand.
pub fn oracle_ccq_scores(c: &CcqCounts) -> (f64, f64, f64) {
    if c.pred == 0 && c.gt == 0 {
        return (1.0, 1.0, 1.0);
    }
    if c.pred == 0 {
        return (1.0, 0.0, 0.0);
    }
    if c.gt == 0 {
        return (0.0, 1.0, 0.0);
    }
    let correctness = c.matched_pred as f64 / c.pred as f64;
    let completeness = c.matched_gt as f64 / c.gt as f64;
    let quality = c.matched_pred as f64 / (c.pred + c.gt - c.matched_gt) as f64;
    (correctness, completeness, quality)
}

/// Relative error for gradient checks.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}
