//! Road-network evaluation metrics.
//!
//! Pixel-based CCQ on skeleton rasters, and four graph metrics: TLTS, APLS,
//! JUNCT and Holes & Marbles. Randomized metrics draw their samples up front
//! from a seeded ChaCha stream, evaluate samples in parallel and aggregate
//! integer counts or ordered sums, so results do not depend on the number of
//! worker threads.

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, NodeId, PathQuery, Point, RoadGraph};
use crate::raster::{self, BinaryMask};

mod evaluate;
pub use evaluate::*;

pub const DEFAULT_CCQ_TOLERANCE: f64 = 2.0;
pub const DEFAULT_TLTS_REL_TOL: f64 = 0.05;
pub const DEFAULT_PATH_SAMPLES: usize = 500;
pub const DEFAULT_HM_RADIUS: f64 = 300.0;
pub const DEFAULT_HM_SAMPLES: usize = 1000;
pub const DEFAULT_HM_SPACING: f64 = 10.0;
pub const DEFAULT_JUNCT_MAX_ANGLE_DEG: f64 = 45.0;
pub const DEFAULT_JUNCT_PROBE: f64 = 20.0;

/// Relaxed precision / recall / IoU over skeleton pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcqResult {
    pub correctness: f64,
    pub completeness: f64,
    pub quality: f64,
}

/// Pixel counts behind a [`CcqResult`]; sums of counts pool across tiles.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CcqCounts {
    /// Predicted skeleton pixels near the ground-truth skeleton.
    pub matched_pred: usize,
    /// Ground-truth skeleton pixels near the predicted skeleton.
    pub matched_gt: usize,
    pub pred: usize,
    pub gt: usize,
}

impl CcqCounts {
    pub fn result(&self) -> CcqResult {
        match (self.pred, self.gt) {
            (0, 0) => CcqResult {
                correctness: 1.0,
                completeness: 1.0,
                quality: 1.0,
            },
            (p, g) => CcqResult {
                correctness: if p == 0 {
                    1.0
                } else {
                    self.matched_pred as f64 / p as f64
                },
                completeness: if g == 0 { 1.0 } else { self.matched_gt as f64 / g as f64 },
                quality: self.matched_pred as f64 / (p + g - self.matched_gt) as f64,
            },
        }
    }

    pub fn add(&mut self, other: &CcqCounts) {
        self.matched_pred += other.matched_pred;
        self.matched_gt += other.matched_gt;
        self.pred += other.pred;
        self.gt += other.gt;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrecisionRecall {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self { precision, recall, f1 }
    }
}

/// How node pairs or start nodes are chosen for graph metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    /// Every connected pair (or every start node), in ascending id order.
    Exhaustive,
    /// `n` draws with replacement from a ChaCha8 stream seeded with `seed`.
    Random { n: usize, seed: u64 },
}

/// Marks pixels within Euclidean distance `tol` of any foreground pixel.
fn buffer(m: &BinaryMask, tol: f64) -> BinaryMask {
    let (w, h) = m.dims();
    let r = tol.floor() as isize;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| ((dx * dx + dy * dy) as f64) <= tol * tol)
        .collect();
    let mut out = BinaryMask::zeros(w, h);
    for (x, y) in m.ones_iter() {
        for &(dx, dy) in &offsets {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            if nx >= 0 && ny >= 0 && (nx as usize) < w && (ny as usize) < h {
                out.set(nx as usize, ny as usize, true);
            }
        }
    }
    out
}

fn count_within(items: &BinaryMask, buffered: &BinaryMask) -> usize {
    items
        .bits()
        .iter()
        .zip(buffered.bits())
        .filter(|(&a, &b)| a && b)
        .count()
}

/// CCQ counts between the skeletons of `pred` and `gt` with shift tolerance `tol`.
pub fn ccq_counts(pred: &BinaryMask, gt: &BinaryMask, tol: f64) -> Result<CcqCounts> {
    if pred.dims() != gt.dims() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::Domain(format!("tolerance {tol} must be non-negative")));
    }
    let (ps, gs) = rayon::join(|| raster::skeletonize(pred), || raster::skeletonize(gt));
    Ok(ccq_counts_on_skeletons(&ps, &gs, tol))
}

/// CCQ counts on masks that are already skeletons.
pub fn ccq_counts_on_skeletons(pred_skel: &BinaryMask, gt_skel: &BinaryMask, tol: f64) -> CcqCounts {
    CcqCounts {
        matched_pred: count_within(pred_skel, &buffer(gt_skel, tol)),
        matched_gt: count_within(gt_skel, &buffer(pred_skel, tol)),
        pred: pred_skel.count_ones(),
        gt: gt_skel.count_ones(),
    }
}

pub fn ccq(pred: &BinaryMask, gt: &BinaryMask, tol: f64) -> Result<CcqResult> {
    Ok(ccq_counts(pred, gt, tol)?.result())
}

/// Connected node pairs `(a, b)` of `g`, `a != b`.
pub fn sample_pairs(g: &RoadGraph, sampling: Sampling) -> Vec<(NodeId, NodeId)> {
    let comp = g.components();
    let n_comp = comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<NodeId>> = vec![Vec::new(); n_comp];
    for (v, &c) in comp.iter().enumerate() {
        members[c].push(v);
    }
    match sampling {
        Sampling::Exhaustive => {
            let mut out = Vec::new();
            for a in 0..g.node_count() {
                for b in a + 1..g.node_count() {
                    if comp[a] == comp[b] {
                        out.push((a, b));
                    }
                }
            }
            out
        }
        Sampling::Random { n, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            draw_pairs(&members, n, &mut rng)
        }
    }
}

fn draw_pairs(members: &[Vec<NodeId>], n: usize, rng: &mut ChaCha8Rng) -> Vec<(NodeId, NodeId)> {
    let weights: Vec<u64> = members
        .iter()
        .map(|m| (m.len() as u64) * (m.len() as u64).saturating_sub(1))
        .collect();
    let Ok(pick) = WeightedIndex::new(&weights) else {
        return Vec::new();
    };
    (0..n)
        .map(|_| {
            let m = &members[pick.sample(rng)];
            let i = rng.gen_range(0..m.len());
            let mut j = rng.gen_range(0..m.len() - 1);
            if j >= i {
                j += 1;
            }
            (m[i], m[j])
        })
        .collect()
}

fn require_connected_pair(g: &RoadGraph, what: &str) -> Result<()> {
    let comp = g.components();
    let mut seen = vec![false; g.node_count()];
    for &c in &comp {
        if seen[c] {
            return Ok(());
        }
        seen[c] = true;
    }
    Err(Error::Domain(format!("{what} graph has no connected node pair")))
}

/// Outcome of matching one reference path into the other graph.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchedPathSample {
    pub a: NodeId,
    pub b: NodeId,
    /// Snapped endpoints, `None` when either endpoint found no node in range.
    pub matched: Option<(NodeId, NodeId)>,
    pub reference_length: f64,
    /// `None` when unmatched or when the snapped endpoints are disconnected.
    pub other_length: Option<f64>,
}

fn match_paths(
    reference: &RoadGraph,
    other: &RoadGraph,
    pairs: &[(NodeId, NodeId)],
    match_dist: f64,
) -> Vec<MatchedPathSample> {
    let mut snaps: HashMap<NodeId, Option<NodeId>> = HashMap::new();
    for &(a, b) in pairs {
        for v in [a, b] {
            snaps
                .entry(v)
                .or_insert_with(|| other.snap_node(reference.point(v), match_dist));
        }
    }
    pairs
        .par_iter()
        .map(|&(a, b)| {
            let reference_length = reference
                .shortest_path_length(PathQuery { source: a, target: b })
                .expect("sampled ids are valid")
                .expect("sampled pairs are connected");
            let matched = snaps[&a].zip(snaps[&b]);
            let other_length = matched.and_then(|(sa, sb)| {
                other
                    .shortest_path_length(PathQuery { source: sa, target: sb })
                    .expect("snapped ids are valid")
            });
            MatchedPathSample {
                a,
                b,
                matched,
                reference_length,
                other_length,
            }
        })
        .collect()
}

/// Counts behind a TLTS score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TltsCounts {
    pub correct: usize,
    pub too_long: usize,
    pub too_short: usize,
    /// Unmatched endpoints or disconnected predicted endpoints.
    pub infeasible: usize,
}

impl TltsCounts {
    pub fn total(&self) -> usize {
        self.correct + self.too_long + self.too_short + self.infeasible
    }

    pub fn fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.correct as f64 / self.total() as f64
        }
    }

    pub fn add(&mut self, o: &TltsCounts) {
        self.correct += o.correct;
        self.too_long += o.too_long;
        self.too_short += o.too_short;
        self.infeasible += o.infeasible;
    }
}

pub fn tlts_counts(
    pred: &RoadGraph,
    gt: &RoadGraph,
    sampling: Sampling,
    rel_tol: f64,
    match_dist: f64,
) -> Result<TltsCounts> {
    require_connected_pair(gt, "ground-truth")?;
    let pairs = sample_pairs(gt, sampling);
    let mut counts = TltsCounts::default();
    for s in match_paths(gt, pred, &pairs, match_dist) {
        match s.other_length {
            None => counts.infeasible += 1,
            Some(l) if (l - s.reference_length).abs() <= rel_tol * s.reference_length => counts.correct += 1,
            Some(l) if l > s.reference_length => counts.too_long += 1,
            Some(_) => counts.too_short += 1,
        }
    }
    Ok(counts)
}

/// Fraction of sampled ground-truth paths whose matched predicted path length
/// is within `rel_tol` of the ground-truth length.
pub fn tlts(pred: &RoadGraph, gt: &RoadGraph, sampling: Sampling, rel_tol: f64, match_dist: f64) -> Result<f64> {
    Ok(tlts_counts(pred, gt, sampling, rel_tol, match_dist)?.fraction())
}

/// Sum of clamped relative path-length errors in one direction.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AplsDirection {
    pub penalty_sum: f64,
    pub samples: usize,
}

impl AplsDirection {
    pub fn score(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            1.0 - self.penalty_sum / self.samples as f64
        }
    }

    pub fn add(&mut self, o: &AplsDirection) {
        self.penalty_sum += o.penalty_sum;
        self.samples += o.samples;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AplsParts {
    pub gt_to_pred: AplsDirection,
    pub pred_to_gt: AplsDirection,
}

impl AplsParts {
    /// Harmonic mean of the two directional scores (0 if either is 0).
    pub fn score(&self) -> f64 {
        let (a, b) = (self.gt_to_pred.score(), self.pred_to_gt.score());
        if a <= 0.0 || b <= 0.0 {
            0.0
        } else {
            2.0 * a * b / (a + b)
        }
    }
}

fn apls_direction(
    reference: &RoadGraph,
    other: &RoadGraph,
    pairs: &[(NodeId, NodeId)],
    match_dist: f64,
) -> AplsDirection {
    let samples = match_paths(reference, other, pairs, match_dist);
    let penalty_sum = samples
        .iter()
        .map(|s| match s.other_length {
            None => 1.0,
            Some(l) => ((s.reference_length - l).abs() / s.reference_length).min(1.0),
        })
        .sum();
    AplsDirection {
        penalty_sum,
        samples: samples.len(),
    }
}

/// Directional APLS scores, ground truth as reference first.
///
/// In random mode both directions draw from one stream seeded with `seed`,
/// ground-truth pairs first.
pub fn apls_parts(pred: &RoadGraph, gt: &RoadGraph, sampling: Sampling, match_dist: f64) -> Result<AplsParts> {
    require_connected_pair(gt, "ground-truth")?;
    let (gt_pairs, pred_pairs) = match sampling {
        Sampling::Exhaustive => (
            sample_pairs(gt, Sampling::Exhaustive),
            sample_pairs(pred, Sampling::Exhaustive),
        ),
        Sampling::Random { n, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let first = draw_pairs(&members_of(gt), n, &mut rng);
            let second = draw_pairs(&members_of(pred), n, &mut rng);
            (first, second)
        }
    };
    Ok(AplsParts {
        gt_to_pred: apls_direction(gt, pred, &gt_pairs, match_dist),
        pred_to_gt: apls_direction(pred, gt, &pred_pairs, match_dist),
    })
}

fn members_of(g: &RoadGraph) -> Vec<Vec<NodeId>> {
    let comp = g.components();
    let n_comp = comp.iter().copied().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); n_comp];
    for (v, &c) in comp.iter().enumerate() {
        members[c].push(v);
    }
    members
}

pub fn apls(pred: &RoadGraph, gt: &RoadGraph, sampling: Sampling, match_dist: f64) -> Result<f64> {
    Ok(apls_parts(pred, gt, sampling, match_dist)?.score())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JunctParams {
    pub match_dist: f64,
    /// Largest angle between two incident roads that still counts as the same road.
    pub max_angle_deg: f64,
    /// Arc length along a road at which its direction is measured.
    pub probe: f64,
}

impl Default for JunctParams {
    fn default() -> Self {
        Self {
            match_dist: graph::DEFAULT_MATCH_DIST,
            max_angle_deg: DEFAULT_JUNCT_MAX_ANGLE_DEG,
            probe: DEFAULT_JUNCT_PROBE,
        }
    }
}

/// Sums behind a JUNCT score.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct JunctCounts {
    /// Sum over ground-truth junctions of the captured edge fraction.
    pub recall_sum: f64,
    pub gt_junctions: usize,
    /// Sum over predicted junctions of one minus the spurious edge fraction.
    pub precision_sum: f64,
    pub pred_junctions: usize,
}

impl JunctCounts {
    pub fn result(&self) -> PrecisionRecall {
        let mean = |sum: f64, n: usize, other_n: usize| match (n, other_n) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            _ => sum / n as f64,
        };
        PrecisionRecall::new(
            mean(self.precision_sum, self.pred_junctions, self.gt_junctions),
            mean(self.recall_sum, self.gt_junctions, self.pred_junctions),
        )
    }

    pub fn add(&mut self, o: &JunctCounts) {
        self.recall_sum += o.recall_sum;
        self.gt_junctions += o.gt_junctions;
        self.precision_sum += o.precision_sum;
        self.pred_junctions += o.pred_junctions;
    }
}

/// Greedy one-to-one assignment over candidate `(cost, i, j)` triples.
fn greedy_match(mut candidates: Vec<(f64, usize, usize)>, n_left: usize, n_right: usize) -> Vec<(usize, usize)> {
    candidates.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    let (mut used_l, mut used_r) = (vec![false; n_left], vec![false; n_right]);
    let mut out = Vec::new();
    for (_, i, j) in candidates {
        if !used_l[i] && !used_r[j] {
            used_l[i] = true;
            used_r[j] = true;
            out.push((i, j));
        }
    }
    out
}

fn incident_directions(g: &RoadGraph, v: NodeId, probe: f64) -> Vec<Point> {
    g.neighbors(v)
        .iter()
        .map(|&(_, e)| graph::road_direction(g, v, e, probe))
        .collect()
}

/// Number of roads at `v` (ground truth) matched one-to-one to roads at `u`
/// (prediction) within `max_angle_deg`.
fn captured_edges(gt: &RoadGraph, v: NodeId, pred: &RoadGraph, u: NodeId, params: &JunctParams) -> usize {
    let dv = incident_directions(gt, v, params.probe);
    let du = incident_directions(pred, u, params.probe);
    let mut candidates = Vec::new();
    for (i, a) in dv.iter().enumerate() {
        for (j, b) in du.iter().enumerate() {
            let angle = (a.x * b.x + a.y * b.y).clamp(-1.0, 1.0).acos().to_degrees();
            if angle <= params.max_angle_deg + 1e-9 {
                candidates.push((angle, i, j));
            }
        }
    }
    greedy_match(candidates, dv.len(), du.len()).len()
}

pub fn junct_counts(pred: &RoadGraph, gt: &RoadGraph, params: &JunctParams) -> JunctCounts {
    let gj = gt.junctions();
    let pj = pred.junctions();
    let mut candidates = Vec::new();
    for (i, &v) in gj.iter().enumerate() {
        for (j, &u) in pj.iter().enumerate() {
            let d = gt.point(v).dist(pred.point(u));
            if d <= params.match_dist {
                candidates.push((d, i, j));
            }
        }
    }
    let pairs = greedy_match(candidates, gj.len(), pj.len());
    let mut counts = JunctCounts {
        gt_junctions: gj.len(),
        pred_junctions: pj.len(),
        ..Default::default()
    };
    for (i, j) in pairs {
        let (v, u) = (gj[i], pj[j]);
        let captured = captured_edges(gt, v, pred, u, params) as f64;
        counts.recall_sum += captured / gt.degree(v) as f64;
        counts.precision_sum += captured / pred.degree(u) as f64;
    }
    counts
}

/// Junction precision/recall: per matched junction pair, recall is the share
/// of ground-truth roads also present at the predicted junction and precision
/// is one minus the share of predicted roads absent from the ground truth.
pub fn junct(pred: &RoadGraph, gt: &RoadGraph, params: &JunctParams) -> PrecisionRecall {
    junct_counts(pred, gt, params).result()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolesMarblesParams {
    /// Geodesic radius of each explored subgraph.
    pub radius: f64,
    pub match_dist: f64,
    /// Interval between control points along the roads.
    pub spacing: f64,
}

impl Default for HolesMarblesParams {
    fn default() -> Self {
        Self {
            radius: DEFAULT_HM_RADIUS,
            match_dist: graph::DEFAULT_MATCH_DIST,
            spacing: DEFAULT_HM_SPACING,
        }
    }
}

/// Pooled control-point counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HolesMarblesCounts {
    pub holes: usize,
    pub matched_holes: usize,
    pub marbles: usize,
    pub matched_marbles: usize,
}

impl HolesMarblesCounts {
    pub fn result(&self) -> PrecisionRecall {
        let ratio = |num: usize, den: usize, other: usize| match (den, other) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            _ => num as f64 / den as f64,
        };
        PrecisionRecall::new(
            ratio(self.matched_marbles, self.marbles, self.holes),
            ratio(self.matched_holes, self.holes, self.marbles),
        )
    }

    pub fn add(&mut self, o: &HolesMarblesCounts) {
        self.holes += o.holes;
        self.matched_holes += o.matched_holes;
        self.marbles += o.marbles;
        self.matched_marbles += o.matched_marbles;
    }
}

/// Number of `items` within `dist` of some point in `targets`.
pub fn count_near(items: &[Point], targets: &[Point], dist: f64) -> usize {
    if targets.is_empty() {
        return 0;
    }
    let cell = dist.max(1e-9);
    let key = |p: Point| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<Point>> = HashMap::new();
    for &t in targets {
        grid.entry(key(t)).or_default().push(t);
    }
    let d2 = dist * dist;
    items
        .iter()
        .filter(|&&p| {
            let (cx, cy) = key(p);
            (-1..=1).any(|dx| {
                (-1..=1).any(|dy| {
                    grid.get(&(cx + dx, cy + dy))
                        .is_some_and(|ts| ts.iter().any(|t| t.dist2(p) <= d2))
                })
            })
        })
        .count()
}

/// Counts for a single start node of the ground truth.
pub fn holes_marbles_at(
    pred: &RoadGraph,
    gt: &RoadGraph,
    start: NodeId,
    params: &HolesMarblesParams,
) -> Result<HolesMarblesCounts> {
    let holes = gt.walk_points(start, params.radius, params.spacing)?;
    let Some(snapped) = pred.snap_node(gt.point(start), params.match_dist) else {
        return Ok(HolesMarblesCounts {
            holes: holes.len(),
            ..Default::default()
        });
    };
    let marbles = pred.walk_points(snapped, params.radius, params.spacing)?;
    Ok(HolesMarblesCounts {
        holes: holes.len(),
        matched_holes: count_near(&holes, &marbles, params.match_dist),
        marbles: marbles.len(),
        matched_marbles: count_near(&marbles, &holes, params.match_dist),
    })
}

pub fn holes_marbles_counts(
    pred: &RoadGraph,
    gt: &RoadGraph,
    sampling: Sampling,
    params: &HolesMarblesParams,
) -> Result<HolesMarblesCounts> {
    if gt.is_empty() {
        return Err(Error::Domain("ground-truth graph is empty".into()));
    }
    let starts: Vec<NodeId> = match sampling {
        Sampling::Exhaustive => (0..gt.node_count()).collect(),
        Sampling::Random { n, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| rng.gen_range(0..gt.node_count())).collect()
        }
    };
    let per_start: Vec<HolesMarblesCounts> = starts
        .par_iter()
        .map(|&s| holes_marbles_at(pred, gt, s, params))
        .collect::<Result<_>>()?;
    let mut total = HolesMarblesCounts::default();
    for c in &per_start {
        total.add(c);
    }
    Ok(total)
}

/// Holes & Marbles: control points dropped along the ground truth (holes)
/// and the prediction (marbles) around each sampled start, matched within
/// `match_dist` and pooled over all samples.
pub fn holes_and_marbles(
    pred: &RoadGraph,
    gt: &RoadGraph,
    sampling: Sampling,
    params: &HolesMarblesParams,
) -> Result<PrecisionRecall> {
    Ok(holes_marbles_counts(pred, gt, sampling, params)?.result())
}
