//! Dynamic, spatially-aware label assignment for a multi-scale patch
//! discriminator.
//!
//! A prediction is thresholded and restricted to the dilated ground truth
//! (`T0`). Ground-truth skeleton pixels missing from `T0` are grouped into
//! 8-connected interruptions; a finest-level cell is labelled incorrect (0)
//! when one interruption puts at least `min_interruption` of its pixels inside
//! it. Coarser levels are the AND of their 2x2 children, so a large patch is
//! incorrect exactly when it contains an incorrect finest cell.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{self, BinaryMask, ProbabilityMap};

pub const DEFAULT_CELL: usize = 32;
pub const DEFAULT_MIN_INTERRUPTION: usize = 4;
pub const DEFAULT_LEVELS: usize = 4;

/// Parameters of the label pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    pub threshold: f64,
    pub dilation: usize,
    /// Side of a finest-level cell in pixels.
    pub cell: usize,
    /// Interruption pixels a single component must place inside a cell.
    pub min_interruption: usize,
    /// Number of pyramid levels; the coarsest patch is `cell * 2^(levels-1)`.
    pub levels: usize,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            threshold: raster::DEFAULT_THRESHOLD,
            dilation: raster::DEFAULT_DILATION,
            cell: DEFAULT_CELL,
            min_interruption: DEFAULT_MIN_INTERRUPTION,
            levels: DEFAULT_LEVELS,
        }
    }
}

impl LabelConfig {
    /// Patch side per level, coarsest first (`[256, 128, 64, 32]` by default).
    pub fn patch_sizes(&self) -> Vec<usize> {
        (0..self.levels).map(|k| self.cell << (self.levels - 1 - k)).collect()
    }
}

/// One level of labels: `rows x cols` cells of `patch_size` pixels each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMatrix {
    patch_size: usize,
    rows: usize,
    cols: usize,
    labels: Vec<bool>,
}

impl LabelMatrix {
    pub fn new(patch_size: usize, rows: usize, cols: usize, labels: Vec<bool>) -> Result<Self> {
        if rows * cols != labels.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} label matrix given {} entries",
                labels.len()
            )));
        }
        Ok(Self {
            patch_size,
            rows,
            cols,
            labels,
        })
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.labels[row * self.cols + col]
    }

    /// Positions labelled 0 (incorrect), row-major.
    pub fn zeros(&self) -> Vec<(usize, usize)> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| !l)
            .map(|(i, _)| (i / self.cols, i % self.cols))
            .collect()
    }

    fn and_reduce(&self) -> LabelMatrix {
        let (rows, cols) = (self.rows / 2, self.cols / 2);
        let mut labels = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                labels.push(
                    self.get(2 * r, 2 * c)
                        && self.get(2 * r, 2 * c + 1)
                        && self.get(2 * r + 1, 2 * c)
                        && self.get(2 * r + 1, 2 * c + 1),
                );
            }
        }
        LabelMatrix {
            patch_size: self.patch_size * 2,
            rows,
            cols,
            labels,
        }
    }
}

/// Label matrices ordered coarsest level first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelPyramid {
    levels: Vec<LabelMatrix>,
}

impl LabelPyramid {
    /// Validates nesting (each level halves the patch and doubles both
    /// dimensions) and AND-propagation between consecutive levels.
    pub fn new(levels: Vec<LabelMatrix>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Shape("label pyramid has no levels".into()));
        }
        for (k, pair) in levels.windows(2).enumerate() {
            let (coarse, fine) = (&pair[0], &pair[1]);
            if fine.rows != coarse.rows * 2 || fine.cols != coarse.cols * 2 || fine.patch_size * 2 != coarse.patch_size
            {
                return Err(Error::Shape(format!(
                    "level {} ({}x{}, patch {}) does not nest inside level {k} ({}x{}, patch {})",
                    k + 1,
                    fine.rows,
                    fine.cols,
                    fine.patch_size,
                    coarse.rows,
                    coarse.cols,
                    coarse.patch_size
                )));
            }
            if fine.and_reduce().labels != coarse.labels {
                return Err(Error::Domain(format!(
                    "level {k} is not the AND of its children at level {}",
                    k + 1
                )));
            }
        }
        Ok(Self { levels })
    }

    /// Builds `n_levels` levels from the finest matrix by repeated 2x2 AND.
    pub fn from_finest(finest: LabelMatrix, n_levels: usize) -> Result<Self> {
        if n_levels == 0 {
            return Err(Error::Domain("pyramid needs at least one level".into()));
        }
        let step = 1usize << (n_levels - 1);
        if !finest.rows.is_multiple_of(step) || !finest.cols.is_multiple_of(step) {
            return Err(Error::Shape(format!(
                "{}x{} finest grid cannot be halved {} times",
                finest.rows,
                finest.cols,
                n_levels - 1
            )));
        }
        let mut levels = vec![finest];
        for _ in 1..n_levels {
            let next = levels.last().unwrap().and_reduce();
            levels.push(next);
        }
        levels.reverse();
        Ok(Self { levels })
    }

    /// A pyramid with every label 1 over a `width x height` image.
    pub fn all_ones(width: usize, height: usize, config: &LabelConfig) -> Result<Self> {
        let (rows, cols) = grid_dims(width, height, config)?;
        let finest = LabelMatrix::new(config.cell, rows, cols, vec![true; rows * cols])?;
        Self::from_finest(finest, config.levels)
    }

    pub fn levels(&self) -> &[LabelMatrix] {
        &self.levels
    }

    pub fn finest(&self) -> &LabelMatrix {
        self.levels.last().unwrap()
    }

    pub fn coarsest(&self) -> &LabelMatrix {
        &self.levels[0]
    }

    pub fn is_all_ones(&self) -> bool {
        self.levels.iter().all(|l| l.labels.iter().all(|&b| b))
    }

    /// Total number of cells over all levels (85 for a 256x256 input).
    pub fn cell_count(&self) -> usize {
        self.levels.iter().map(|l| l.labels.len()).sum()
    }
}

/// An 8-connected run of ground-truth skeleton pixels missing from `T0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interruption {
    /// Member pixels `(x, y)` in row-major order.
    pub pixels: Vec<(usize, usize)>,
}

impl Interruption {
    pub fn size(&self) -> usize {
        self.pixels.len()
    }
}

/// Skeleton pixels not covered by `t0`.
pub fn false_negative_set(gt_skeleton: &BinaryMask, t0: &BinaryMask) -> Result<BinaryMask> {
    if gt_skeleton.dims() != t0.dims() {
        return Err(Error::Shape(format!(
            "skeleton {:?} vs T0 {:?}",
            gt_skeleton.dims(),
            t0.dims()
        )));
    }
    let bits = gt_skeleton
        .bits()
        .iter()
        .zip(t0.bits())
        .map(|(&s, &t)| s && !t)
        .collect();
    BinaryMask::new(gt_skeleton.width(), gt_skeleton.height(), bits)
}

/// Maximal 8-connected components of the false-negative set, ordered by their
/// smallest row-major pixel.
pub fn interruptions(fn_set: &BinaryMask) -> Vec<Interruption> {
    raster::components_8(fn_set)
        .into_iter()
        .map(|pixels| Interruption { pixels })
        .collect()
}

fn grid_dims(width: usize, height: usize, config: &LabelConfig) -> Result<(usize, usize)> {
    if config.cell == 0 || config.levels == 0 {
        return Err(Error::Domain("cell size and level count must be positive".into()));
    }
    if width == 0 || height == 0 || !width.is_multiple_of(config.cell) || !height.is_multiple_of(config.cell) {
        return Err(Error::Shape(format!(
            "{width}x{height} image is not a whole number of {c}x{c} cells",
            c = config.cell
        )));
    }
    let coarsest = config.cell << (config.levels - 1);
    if !width.is_multiple_of(coarsest) || !height.is_multiple_of(coarsest) {
        return Err(Error::Shape(format!(
            "{width}x{height} image is not a whole number of {coarsest}x{coarsest} patches \
             required by {} levels",
            config.levels
        )));
    }
    Ok((height / config.cell, width / config.cell))
}

/// Finest-level labels: a cell is 0 iff some single interruption has at
/// least `min_len` of its pixels inside it.
pub fn finest_labels(gt_skeleton: &BinaryMask, t0: &BinaryMask, cell: usize, min_len: usize) -> Result<LabelMatrix> {
    let (w, h) = gt_skeleton.dims();
    if cell == 0 || w % cell != 0 || h % cell != 0 {
        return Err(Error::Shape(format!(
            "{w}x{h} image is not a whole number of {cell}x{cell} cells"
        )));
    }
    let fn_set = false_negative_set(gt_skeleton, t0)?;
    let (rows, cols) = (h / cell, w / cell);
    let mut labels = vec![true; rows * cols];
    let mut counts = vec![0usize; rows * cols];
    for comp in interruptions(&fn_set) {
        let mut touched = Vec::new();
        for &(x, y) in &comp.pixels {
            let c = (y / cell) * cols + x / cell;
            if counts[c] == 0 {
                touched.push(c);
            }
            counts[c] += 1;
        }
        for c in touched {
            if counts[c] >= min_len {
                labels[c] = false;
            }
            counts[c] = 0;
        }
    }
    LabelMatrix::new(cell, rows, cols, labels)
}

/// Full pipeline from a prediction and its ground truth to the label pyramid.
pub fn build_label_pyramid(gt_mask: &BinaryMask, prob: &ProbabilityMap, config: &LabelConfig) -> Result<LabelPyramid> {
    Ok(build_labels_with_t0(gt_mask, prob, config)?.0)
}

/// As [`build_label_pyramid`], also returning `T0`.
pub fn build_labels_with_t0(
    gt_mask: &BinaryMask,
    prob: &ProbabilityMap,
    config: &LabelConfig,
) -> Result<(LabelPyramid, BinaryMask)> {
    let (w, h) = gt_mask.dims();
    if prob.dims() != (w, h) {
        return Err(Error::Shape(format!(
            "prediction {:?} vs ground truth {:?}",
            prob.dims(),
            gt_mask.dims()
        )));
    }
    grid_dims(w, h, config)?;
    let t0 = raster::build_t0(prob, gt_mask, config.threshold, config.dilation)?;
    let skeleton = raster::skeletonize(gt_mask);
    let finest = finest_labels(&skeleton, &t0, config.cell, config.min_interruption)?;
    Ok((LabelPyramid::from_finest(finest, config.levels)?, t0))
}

/// Multi-channel companion image, stored channel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRaster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageRaster {
    /// `data` holds `channels` planes of `width * height` values each.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width * height * channels != data.len() {
            return Err(Error::Shape(format!(
                "{width}x{height}x{channels} image given {} values",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Discriminator input: the mask channel followed by the image channels.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorInput {
    mask: BinaryMask,
    image: Option<ImageRaster>,
}

impl DiscriminatorInput {
    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    pub fn image(&self) -> Option<&ImageRaster> {
        self.image.as_ref()
    }

    pub fn channels(&self) -> usize {
        1 + self.image.as_ref().map_or(0, |i| i.channels)
    }

    /// Channel-major stack, mask first (as 0.0 / 1.0).
    pub fn to_planar(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.mask.bits().iter().map(|&b| b as u8 as f64).collect();
        if let Some(img) = &self.image {
            out.extend_from_slice(&img.data);
        }
        out
    }
}

pub fn build_discriminator_input(t0: &BinaryMask, image: Option<&ImageRaster>) -> Result<DiscriminatorInput> {
    if let Some(img) = image {
        if img.dims() != t0.dims() {
            return Err(Error::Shape(format!("image {:?} vs mask {:?}", img.dims(), t0.dims())));
        }
    }
    Ok(DiscriminatorInput {
        mask: t0.clone(),
        image: image.cloned(),
    })
}
