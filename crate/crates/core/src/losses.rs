//! Reference loss kernels with analytic gradients.
//!
//! * pixel-wise BCE of a probability map against a binary mask,
//! * the discriminator loss over a pyramid of patch outputs supervised by a
//!   [`LabelPyramid`], plus `-log D` on the real-sample pyramid,
//! * the generator loss, BCE plus `lambda_a` times `-log D` on the
//!   prediction pyramid.
//!
//! Every probability entering a logarithm is clamped to `[eps, 1 - eps]`
//! and the gradient is zero wherever the clamp is active. Losses are sums
//! unless [`LossOptions::normalize`] is set, in which case each sum is divided
//! by its element count. Summation is row-major, level by level.
//!
//! The gradient from the discriminator outputs back to the prediction runs
//! through an external network and is not computed here; its binarization
//! stage is the identity (see [`crate::raster::ste_backward`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labelgen::LabelPyramid;
use crate::raster::{BinaryMask, ProbabilityMap, RealGrid};

pub const DEFAULT_EPS: f64 = 1e-7;
pub const DEFAULT_LAMBDA_A: f64 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossOptions {
    pub eps: f64,
    pub normalize: bool,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            normalize: false,
        }
    }
}

/// One level of discriminator outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputLevel {
    pub patch_size: usize,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// Discriminator outputs, coarsest level first, shaped like a [`LabelPyramid`].
#[derive(Clone, Debug, PartialEq)]
pub struct OutputPyramid {
    levels: Vec<OutputLevel>,
}

impl OutputPyramid {
    pub fn new(levels: Vec<OutputLevel>) -> Result<Self> {
        for (k, l) in levels.iter().enumerate() {
            if l.rows * l.cols != l.values.len() {
                return Err(Error::Shape(format!(
                    "output level {k} is {}x{} but holds {} values",
                    l.rows,
                    l.cols,
                    l.values.len()
                )));
            }
            if let Some(v) = l.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Domain(format!("output level {k} holds {v} outside [0, 1]")));
            }
        }
        Ok(Self { levels })
    }

    /// A pyramid shaped like `labels` with every entry set to `value`.
    pub fn filled_like(labels: &LabelPyramid, value: f64) -> Result<Self> {
        Self::from_fn(labels, |_, _| value)
    }

    /// A pyramid shaped like `labels` with entry `(level, flat index)` from `f`.
    pub fn from_fn(labels: &LabelPyramid, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let levels = labels
            .levels()
            .iter()
            .enumerate()
            .map(|(k, l)| OutputLevel {
                patch_size: l.patch_size(),
                rows: l.rows(),
                cols: l.cols(),
                values: (0..l.rows() * l.cols()).map(|j| f(k, j)).collect(),
            })
            .collect();
        Self::new(levels)
    }

    pub fn levels(&self) -> &[OutputLevel] {
        &self.levels
    }

    pub fn cell_count(&self) -> usize {
        self.levels.iter().map(|l| l.values.len()).sum()
    }

    fn shapes(&self) -> Vec<(usize, usize)> {
        self.levels.iter().map(|l| (l.rows, l.cols)).collect()
    }
}

/// Gradient with respect to each level of an [`OutputPyramid`].
pub type PyramidGrad = Vec<Vec<f64>>;

/// A scalar loss and the gradients it was asked for.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossValue {
    pub loss: f64,
    /// With respect to the generator's probability map.
    pub grad_pred: Option<RealGrid>,
    /// With respect to the discriminator outputs on the prediction.
    pub grad_d_fake: Option<PyramidGrad>,
    /// With respect to the discriminator outputs on the real sample.
    pub grad_d_real: Option<PyramidGrad>,
}

/// `-[y log p + (1-y) log(1-p)]` and its derivative in `p`.
fn bce_term(p: f64, target: bool, eps: f64) -> (f64, f64) {
    let clamped = p.clamp(eps, 1.0 - eps);
    let loss = if target { -clamped.ln() } else { -(1.0 - clamped).ln() };
    let grad = if p < eps || p > 1.0 - eps {
        0.0
    } else {
        let y = target as u8 as f64;
        (p - y) / (p * (1.0 - p))
    };
    (loss, grad)
}

/// `-log p` and its derivative.
fn neg_log_term(p: f64, eps: f64) -> (f64, f64) {
    let clamped = p.clamp(eps, 1.0 - eps);
    let grad = if p < eps || p > 1.0 - eps { 0.0 } else { -1.0 / p };
    (-clamped.ln(), grad)
}

fn scale(n: usize, opts: &LossOptions) -> f64 {
    if opts.normalize && n > 0 {
        1.0 / n as f64
    } else {
        1.0
    }
}

/// Pixel-wise binary cross-entropy.
pub fn bce_loss(pred: &ProbabilityMap, gt: &BinaryMask, with_grad: bool, opts: &LossOptions) -> Result<LossValue> {
    if pred.dims() != gt.dims() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    let s = scale(pred.values().len(), opts);
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(if with_grad { pred.values().len() } else { 0 });
    for (&p, &y) in pred.values().iter().zip(gt.bits()) {
        let (l, g) = bce_term(p, y, opts.eps);
        loss += l;
        if with_grad {
            grad.push(g * s);
        }
    }
    let grad_pred = with_grad.then(|| RealGrid::new(pred.width(), pred.height(), grad).expect("same shape"));
    Ok(LossValue {
        loss: loss * s,
        grad_pred,
        ..Default::default()
    })
}

fn check_pyramid_shapes(labels: &LabelPyramid, others: &[(&str, &OutputPyramid)]) -> Result<()> {
    let want: Vec<(usize, usize)> = labels.levels().iter().map(|l| l.shape()).collect();
    for (name, p) in others {
        if p.shapes() != want {
            return Err(Error::Shape(format!(
                "{name} pyramid shapes {:?} do not match label shapes {want:?}",
                p.shapes()
            )));
        }
    }
    Ok(())
}

/// Discriminator loss: BCE of the outputs on the prediction against the
/// spatial labels, plus `-log` of the outputs on the real sample (whose labels
/// are all 1).
pub fn discriminator_loss(
    d_fake: &OutputPyramid,
    labels: &LabelPyramid,
    d_real: &OutputPyramid,
    opts: &LossOptions,
) -> Result<LossValue> {
    check_pyramid_shapes(labels, &[("fake", d_fake), ("real", d_real)])?;
    let s = scale(labels.cell_count(), opts);
    let mut loss_fake = 0.0;
    let mut loss_real = 0.0;
    let mut grad_fake = Vec::with_capacity(labels.levels().len());
    let mut grad_real = Vec::with_capacity(labels.levels().len());
    for ((lf, lr), lab) in d_fake.levels.iter().zip(&d_real.levels).zip(labels.levels()) {
        let mut gf = Vec::with_capacity(lf.values.len());
        for (&p, &y) in lf.values.iter().zip(lab.labels()) {
            let (l, g) = bce_term(p, y, opts.eps);
            loss_fake += l;
            gf.push(g * s);
        }
        let mut gr = Vec::with_capacity(lr.values.len());
        for &p in &lr.values {
            let (l, g) = neg_log_term(p, opts.eps);
            loss_real += l;
            gr.push(g * s);
        }
        grad_fake.push(gf);
        grad_real.push(gr);
    }
    Ok(LossValue {
        loss: (loss_fake + loss_real) * s,
        grad_pred: None,
        grad_d_fake: Some(grad_fake),
        grad_d_real: Some(grad_real),
    })
}

/// Generator loss: BCE plus `lambda_a` times `-log` of the discriminator
/// outputs on the prediction.
pub fn generator_loss(
    pred: &ProbabilityMap,
    gt: &BinaryMask,
    d_fake: &OutputPyramid,
    lambda_a: f64,
    opts: &LossOptions,
) -> Result<LossValue> {
    if lambda_a.is_nan() || lambda_a < 0.0 {
        return Err(Error::Domain(format!("lambda_a {lambda_a} must be non-negative")));
    }
    let bce = bce_loss(pred, gt, true, opts)?;
    let s = scale(d_fake.cell_count(), opts);
    let mut adversarial = 0.0;
    let mut grad = Vec::with_capacity(d_fake.levels.len());
    for level in &d_fake.levels {
        let mut g = Vec::with_capacity(level.values.len());
        for &p in &level.values {
            let (l, dl) = neg_log_term(p, opts.eps);
            adversarial += l;
            g.push(lambda_a * dl * s);
        }
        grad.push(g);
    }
    Ok(LossValue {
        loss: bce.loss + lambda_a * adversarial * s,
        grad_pred: bce.grad_pred,
        grad_d_fake: Some(grad),
        grad_d_real: None,
    })
}

/// Single-output GAN discriminator loss with the prediction labelled 0:
/// `-log(1 - d_fake) - log(d_real)`. Gradients are 1x1 pyramids.
pub fn vanilla_gan_reduction(d_fake: f64, d_real: f64, opts: &LossOptions) -> Result<LossValue> {
    for (name, v) in [("fake", d_fake), ("real", d_real)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("{name} output {v} outside [0, 1]")));
        }
    }
    let (lf, gf) = bce_term(d_fake, false, opts.eps);
    let (lr, gr) = neg_log_term(d_real, opts.eps);
    Ok(LossValue {
        loss: lf + lr,
        grad_pred: None,
        grad_d_fake: Some(vec![vec![gf]]),
        grad_d_real: Some(vec![vec![gr]]),
    })
}
