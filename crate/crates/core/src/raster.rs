//! Binary-raster primitives: straight-through thresholding, square dilation,
//! Zhang–Suen skeletonization and mask algebra.
//!
//! All rasters are row-major with a top-left origin: index `y * width + x`.
//! Pixels outside the image are background for every neighborhood test.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Default binarization threshold for generator probabilities.
pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Default Chebyshev radius of the ground-truth dilation.
pub const DEFAULT_DILATION: usize = 3;

/// Per-pixel road probabilities in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

/// A `{0, 1}` raster.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

/// Unconstrained real values on a pixel grid, used for gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct RealGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

fn check_len(width: usize, height: usize, len: usize) -> Result<()> {
    if width.checked_mul(height) != Some(len) {
        return Err(Error::Shape(format!(
            "{width}x{height} raster needs {} values, got {len}",
            width.saturating_mul(height)
        )));
    }
    Ok(())
}

fn same_dims(what: &str, a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{what}: {}x{} vs {}x{}", a.0, a.1, b.0, b.1)));
    }
    Ok(())
}

impl ProbabilityMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_len(width, height, values.len())?;
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain(format!(
                "probability {} at pixel ({}, {}) outside [0, 1]",
                values[i],
                i % width,
                i / width
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

impl RealGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_len(width, height, values.len())?;
        Ok(Self { width, height, values })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_len(width, height, bits.len())?;
        Ok(Self { width, height, bits })
    }

    /// Builds a mask from `0`/`1` values; anything else is a domain error.
    pub fn from_u8(width: usize, height: usize, values: &[u8]) -> Result<Self> {
        check_len(width, height, values.len())?;
        let mut bits = Vec::with_capacity(values.len());
        for (i, &v) in values.iter().enumerate() {
            match v {
                0 => bits.push(false),
                1 => bits.push(true),
                _ => {
                    return Err(Error::Domain(format!(
                        "mask value {v} at pixel ({}, {}) is not 0 or 1",
                        i % width,
                        i / width
                    )))
                }
            }
        }
        Ok(Self { width, height, bits })
    }

    /// Parses rows of `'0'`/`'1'` characters (any other character is background).
    /// Handy for fixtures.
    pub fn from_rows(rows: &[&str]) -> Self {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        let mut bits = Vec::with_capacity(width * height);
        for r in rows {
            assert_eq!(r.len(), width, "ragged fixture rows");
            bits.extend(r.bytes().map(|b| b == b'1' || b == b'#'));
        }
        Self { width, height, bits }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Like [`get`](Self::get) but returns `false` outside the image.
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return false;
        }
        self.bits[y as usize * self.width + x as usize]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Row-major coordinates of every foreground pixel.
    pub fn ones_iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| b as u8).collect()
    }

    /// `true` when every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }
}

/// Forward pass of the straight-through binarizer: `1` iff `p >= threshold`.
pub fn threshold_forward(p: &ProbabilityMap, threshold: f64) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Domain(format!(
            "threshold {threshold} outside the open interval (0, 1)"
        )));
    }
    Ok(BinaryMask {
        width: p.width,
        height: p.height,
        bits: p.values.iter().map(|&v| v >= threshold).collect(),
    })
}

/// Backward pass of the straight-through binarizer: the identity Jacobian.
///
/// `p` is only consulted for its shape.
pub fn ste_backward(grad_out: &RealGrid, p: &ProbabilityMap) -> Result<RealGrid> {
    same_dims("ste_backward", grad_out.dims(), p.dims())?;
    Ok(grad_out.clone())
}

/// Dilation by the `(2r+1) x (2r+1)` square: a pixel is set iff some input
/// pixel lies within Chebyshev distance `r`.
pub fn dilate(m: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 || m.bits.is_empty() {
        return m.clone();
    }
    let (w, h) = m.dims();
    // Separable: horizontal then vertical running window.
    let mut horiz = vec![false; w * h];
    for y in 0..h {
        let row = &m.bits[y * w..(y + 1) * w];
        sliding_any(row, 1, w, radius, &mut horiz[y * w..(y + 1) * w], 1);
    }
    let mut out = vec![false; w * h];
    for x in 0..w {
        sliding_any(&horiz[x..], w, h, radius, &mut out[x..], w);
    }
    BinaryMask {
        width: w,
        height: h,
        bits: out,
    }
}

/// `out[i] = any(input[j] for |i - j| <= radius)` over a strided line of `n` items.
fn sliding_any(input: &[bool], in_stride: usize, n: usize, radius: usize, out: &mut [bool], out_stride: usize) {
    // Running count of ones inside the window.
    let mut count = 0usize;
    for j in 0..radius.min(n) {
        count += input[j * in_stride] as usize;
    }
    for i in 0..n {
        let enter = i + radius;
        if enter < n {
            count += input[enter * in_stride] as usize;
        }
        out[i * out_stride] = count > 0;
        if i >= radius {
            count -= input[(i - radius) * in_stride] as usize;
        }
    }
}

/// Elementwise AND.
pub fn mask_intersect(a: &BinaryMask, b: &BinaryMask) -> Result<BinaryMask> {
    same_dims("mask_intersect", a.dims(), b.dims())?;
    Ok(BinaryMask {
        width: a.width,
        height: a.height,
        bits: a.bits.iter().zip(&b.bits).map(|(&x, &y)| x && y).collect(),
    })
}

/// Thresholded prediction restricted to the dilated ground truth.
pub fn build_t0(p: &ProbabilityMap, gt: &BinaryMask, threshold: f64, radius: usize) -> Result<BinaryMask> {
    same_dims("build_t0 prediction vs ground truth", p.dims(), gt.dims())?;
    let thresholded = threshold_forward(p, threshold)?;
    mask_intersect(&thresholded, &dilate(gt, radius))
}

// Neighbour order P2..P9 of the Zhang–Suen formulation: N, NE, E, SE, S, SW, W, NW.
const RING: [(isize, isize); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

fn ring_code(m: &BinaryMask, x: usize, y: usize) -> u8 {
    let (x, y) = (x as isize, y as isize);
    let mut code = 0u8;
    for (k, (dx, dy)) in RING.iter().enumerate() {
        if m.get_signed(x + dx, y + dy) {
            code |= 1 << k;
        }
    }
    code
}

/// Whether deleting a pixel with this 8-neighbourhood preserves topology
/// (one 8-connected foreground component and one 4-connected background
/// component touching it).
fn simple_table() -> &'static [bool; 256] {
    static TABLE: OnceLock<[bool; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [false; 256];
        for (code, slot) in t.iter_mut().enumerate() {
            *slot = is_simple(code as u8);
        }
        t
    })
}

fn is_simple(code: u8) -> bool {
    let on = |k: usize| code & (1 << (k % 8)) != 0;
    // Ring positions: even indices are 4-neighbours, odd are diagonals.
    // Foreground components among ring pixels under 8-adjacency. Two ring
    // pixels are 8-adjacent when they are consecutive on the ring, or when both
    // are 4-neighbours two apart (they touch diagonally, e.g. N and E).
    let fg_adjacent = |a: usize, b: usize| {
        let d = (a + 8 - b) % 8;
        d == 1 || d == 7 || (a.is_multiple_of(2) && b.is_multiple_of(2) && (d == 2 || d == 6))
    };
    let fg: Vec<usize> = (0..8).filter(|&k| on(k)).collect();
    let fg_components = count_components(&fg, fg_adjacent);
    // Background 4-components that contain a 4-neighbour of the centre.
    // Background ring pixels are 4-adjacent only when consecutive on the ring.
    let bg: Vec<usize> = (0..8).filter(|&k| !on(k)).collect();
    let bg_adjacent = |a: usize, b: usize| {
        let d = (a + 8 - b) % 8;
        d == 1 || d == 7
    };
    let bg_components = components(&bg, bg_adjacent)
        .into_iter()
        .filter(|comp| comp.iter().any(|k| k % 2 == 0))
        .count();
    fg_components == 1 && bg_components == 1
}

fn count_components(items: &[usize], adjacent: impl Fn(usize, usize) -> bool) -> usize {
    components(items, adjacent).len()
}

fn components(items: &[usize], adjacent: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let mut seen = vec![false; items.len()];
    let mut out = Vec::new();
    for start in 0..items.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            comp.push(items[i]);
            for j in 0..items.len() {
                if !seen[j] && adjacent(items[i], items[j]) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        out.push(comp);
    }
    out
}

/// Zhang–Suen candidate test for one sub-iteration.
fn zhang_suen_candidate(code: u8, first_pass: bool) -> bool {
    let p = |k: usize| (code >> k) & 1;
    let neighbours = code.count_ones();
    if !(2..=6).contains(&neighbours) {
        return false;
    }
    let transitions = (0..8).filter(|&k| p(k) == 0 && p((k + 1) % 8) == 1).count();
    if transitions != 1 {
        return false;
    }
    // Indices: N=0, E=2, S=4, W=6.
    if first_pass {
        p(0) * p(2) * p(4) == 0 && p(2) * p(4) * p(6) == 0
    } else {
        p(0) * p(2) * p(6) == 0 && p(0) * p(4) * p(6) == 0
    }
}

/// One-pixel-wide thinning by Zhang–Suen sub-iterations.
///
/// Candidates are collected on a snapshot as usual, then removed in row-major
/// order only while they remain simple points with at least two neighbours.
/// That guard keeps shapes the plain parallel rule would erase or split
/// (2x2 blocks, two-pixel-thick diagonals) connected, so 8-connected
/// component count is preserved and the result is a fixed point.
pub fn skeletonize(m: &BinaryMask) -> BinaryMask {
    let mut out = m.clone();
    let (w, h) = out.dims();
    if w == 0 || h == 0 {
        return out;
    }
    let simple = simple_table();
    let mut active: Vec<usize> = (0..w * h).filter(|&i| out.bits[i]).collect();
    loop {
        let mut changed = false;
        for first_pass in [true, false] {
            let candidates: Vec<usize> = active
                .iter()
                .copied()
                .filter(|&i| zhang_suen_candidate(ring_code(&out, i % w, i / w), first_pass))
                .collect();
            for i in candidates {
                let code = ring_code(&out, i % w, i / w);
                if code.count_ones() >= 2 && simple[code as usize] {
                    out.bits[i] = false;
                    changed = true;
                }
            }
            active.retain(|&i| out.bits[i]);
        }
        if !changed {
            break;
        }
    }
    out
}

/// 8-connected foreground components, each listed in row-major order; the
/// components themselves are ordered by their first pixel.
pub fn components_8(m: &BinaryMask) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = m.dims();
    let mut label = vec![false; w * h];
    let mut out = Vec::new();
    for start in 0..w * h {
        if !m.bits[start] || label[start] {
            continue;
        }
        label[start] = true;
        let mut stack = vec![start];
        let mut comp = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            comp.push(i);
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let (nx, ny) = (x + dx, y + dy);
                    if m.get_signed(nx, ny) {
                        let j = ny as usize * w + nx as usize;
                        if !label[j] {
                            label[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp.into_iter().map(|i| (i % w, i / w)).collect());
    }
    out
}
