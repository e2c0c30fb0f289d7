//! Command-line driver.
//!
//! Exit status: 0 on success, 1 on a usage error, 2 on a data error.
//! Parameters resolve as flag, then `--config` TOML file, then the built-in
//! default.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use crate::graph::{self, RoadGraph};
use crate::io::{self, Report};
use crate::labelgen::{self, LabelPyramid};
use crate::losses::{self, OutputPyramid};
use crate::metrics::{self, EvalCounts, GroundTruth};
use crate::params::Params;
use crate::raster::{self, BinaryMask, ProbabilityMap};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (format version 1)");

#[derive(Parser, Debug)]
#[command(name = "roadtopo", version = VERSION, about = "Road segmentation labels, losses and network metrics")]
struct Cli {
    /// TOML file with parameter defaults; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a prediction mask against a ground-truth mask or graph.
    Metrics(MetricsArgs),
    /// Build the multi-scale label pyramid for a prediction.
    Labels(LabelsArgs),
    /// Thin a binary mask to its skeleton.
    Skeletonize(SkeletonizeArgs),
    /// Extract a centerline graph from a binary mask.
    Mask2graph(Mask2GraphArgs),
    /// Rasterize a graph.
    Render(RenderArgs),
    /// Evaluate the loss kernels.
    Loss(LossArgs),
}

/// Overrides for every entry of [`Params`].
#[derive(Args, Debug, Default)]
struct ParamArgs {
    /// Binarization threshold [0.5]
    #[arg(long)]
    threshold: Option<f64>,
    /// Ground-truth dilation radius in pixels [3]
    #[arg(long)]
    dilation: Option<usize>,
    /// Finest label cell side [32]
    #[arg(long)]
    cell: Option<usize>,
    /// Interruption pixels that mark a cell incorrect [4]
    #[arg(long)]
    min_interruption: Option<usize>,
    /// Label pyramid levels [4]
    #[arg(long)]
    levels: Option<usize>,
    /// CCQ shift tolerance in pixels [2]
    #[arg(long)]
    ccq_tolerance: Option<f64>,
    /// Node snapping distance for TLTS and APLS [25]
    #[arg(long)]
    match_dist: Option<f64>,
    /// Relative path-length tolerance for TLTS [0.05]
    #[arg(long)]
    tlts_rel_tol: Option<f64>,
    /// Node pairs sampled for TLTS and APLS [500]
    #[arg(long)]
    path_samples: Option<usize>,
    /// Holes & Marbles subgraph radius [300]
    #[arg(long)]
    hm_radius: Option<f64>,
    /// Holes & Marbles start nodes [1000]
    #[arg(long)]
    hm_samples: Option<usize>,
    /// Holes & Marbles control point spacing [10]
    #[arg(long)]
    hm_spacing: Option<f64>,
    /// JUNCT junction matching distance [25]
    #[arg(long)]
    junct_match_dist: Option<f64>,
    /// JUNCT road matching angle in degrees [45]
    #[arg(long)]
    junct_max_angle_deg: Option<f64>,
    /// Arc length at which JUNCT measures road direction [20]
    #[arg(long)]
    junct_probe: Option<f64>,
    /// Adversarial loss weight [0.005]
    #[arg(long)]
    lambda_a: Option<f64>,
    /// Probability clamp inside logarithms [1e-7]
    #[arg(long)]
    log_eps: Option<f64>,
    /// Divide losses by their element count
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    normalize_loss: Option<bool>,
    /// Seed for sampled metrics [0]
    #[arg(long)]
    seed: Option<u64>,
    /// Use every pair and start node instead of sampling
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    exhaustive: Option<bool>,
    /// Line thickness when rendering a ground-truth graph [1]
    #[arg(long)]
    render_thickness: Option<usize>,
}

impl ParamArgs {
    fn apply(&self, p: &mut Params) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { p.$f = v; } )* };
        }
        set!(
            threshold,
            dilation,
            cell,
            min_interruption,
            levels,
            ccq_tolerance,
            match_dist,
            tlts_rel_tol,
            path_samples,
            hm_radius,
            hm_samples,
            hm_spacing,
            junct_match_dist,
            junct_max_angle_deg,
            junct_probe,
            lambda_a,
            log_eps,
            normalize_loss,
            seed,
            exhaustive,
            render_thickness
        );
    }
}

#[derive(Args, Debug)]
struct MetricsArgs {
    /// Prediction raster, or a directory of them.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth mask (`.pgm`) or graph, or a directory of them.
    #[arg(long)]
    gt: PathBuf,
    /// Report file (stdout if omitted); a directory in batch mode.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args, Debug)]
struct LabelsArgs {
    /// Predicted probability raster.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth mask.
    #[arg(long)]
    gt: PathBuf,
    /// Pyramid document (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the masked prediction fed to the discriminator.
    #[arg(long)]
    t0_out: Option<PathBuf>,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args, Debug)]
struct SkeletonizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct Mask2GraphArgs {
    #[arg(long)]
    input: PathBuf,
    /// Graph file; `.json` selects the document form.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Canvas width before scaling (default: bounding box of the graph).
    #[arg(long)]
    width: Option<usize>,
    /// Canvas height before scaling (default: bounding box of the graph).
    #[arg(long)]
    height: Option<usize>,
    /// Factor applied to coordinates and canvas.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 1)]
    thickness: usize,
}

#[derive(Args, Debug)]
struct LossArgs {
    /// Predicted probability raster.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth mask.
    #[arg(long)]
    gt: PathBuf,
    /// Discriminator outputs on the prediction (output pyramid document).
    #[arg(long)]
    d_fake: Option<PathBuf>,
    /// Discriminator outputs on the real sample.
    #[arg(long)]
    d_real: Option<PathBuf>,
    /// Label pyramid; built from the inputs when omitted.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Loss report (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Gradient of the total generator loss with respect to the prediction, as JSON rows.
    #[arg(long)]
    grad_out: Option<PathBuf>,
    #[command(flatten)]
    params: ParamArgs,
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_DATA
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let base = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => Params::default(),
    };
    let resolve = |a: &ParamArgs| {
        let mut p = base.clone();
        a.apply(&mut p);
        p
    };
    match cli.command {
        Command::Metrics(a) => run_metrics(&a, &resolve(&a.params)),
        Command::Labels(a) => run_labels(&a, &resolve(&a.params)),
        Command::Skeletonize(a) => {
            let m = io::read_mask(&a.input)?;
            io::write_mask(&raster::skeletonize(&m), &a.out)?;
            Ok(())
        }
        Command::Mask2graph(a) => {
            let m = io::read_mask(&a.input)?;
            io::write_graph(&graph::mask_to_graph(&m), &a.out)?;
            Ok(())
        }
        Command::Render(a) => run_render(&a),
        Command::Loss(a) => run_loss(&a, &resolve(&a.params)),
    }
}

fn emit(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn check_dims(a: &Path, da: (usize, usize), b: &Path, db: (usize, usize)) -> anyhow::Result<()> {
    if da != db {
        bail!(
            "dimension mismatch: {} is {}x{} but {} is {}x{}",
            a.display(),
            da.0,
            da.1,
            b.display(),
            db.0,
            db.1
        );
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

/// A prediction raster binarized at the configured threshold.
fn read_prediction_mask(path: &Path, params: &Params) -> anyhow::Result<BinaryMask> {
    let p = io::read_probability_map(path)?;
    Ok(raster::threshold_forward(&p, params.threshold)?)
}

enum GtData {
    Mask(BinaryMask),
    Graph(RoadGraph),
}

fn is_pgm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

fn read_gt(path: &Path) -> anyhow::Result<GtData> {
    Ok(if is_pgm(path) {
        GtData::Mask(io::read_mask(path)?)
    } else {
        GtData::Graph(io::read_graph(path)?)
    })
}

fn evaluate_pair(pred_path: &Path, gt_path: &Path, params: &Params) -> anyhow::Result<EvalCounts> {
    let pred = read_prediction_mask(pred_path, params)?;
    let gt = read_gt(gt_path)?;
    let counts = match &gt {
        GtData::Mask(m) => {
            check_dims(pred_path, pred.dims(), gt_path, m.dims())?;
            metrics::evaluate_all(&pred, GroundTruth::Mask(m), params)?
        }
        GtData::Graph(g) => metrics::evaluate_all(&pred, GroundTruth::Graph(g), params)?,
    };
    Ok(counts)
}

fn run_metrics(a: &MetricsArgs, params: &Params) -> anyhow::Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = a.workers {
        if n == 0 {
            bail!("--workers must be at least 1");
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("starting worker pool")?;
    pool.install(|| {
        if a.pred.is_dir() {
            run_metrics_batch(a, params)
        } else {
            let counts = evaluate_pair(&a.pred, &a.gt, params)?;
            let report = counts.to_report(params, vec![display(&a.pred), display(&a.gt)]);
            emit(&io::format_report(&report), a.out.as_deref())
        }
    })
}

/// Regular files of `dir` keyed by file stem.
fn files_by_stem(dir: &Path) -> anyhow::Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    let entries = fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))?;
    for entry in entries {
        let path = entry?.path();
        if !path.is_file() {
            continue;
        }
        let Some(stem) = path.file_stem().map(|s| s.to_string_lossy().into_owned()) else {
            continue;
        };
        if let Some(prev) = out.insert(stem.clone(), path.clone()) {
            bail!("{} and {} share the stem {stem:?}", prev.display(), path.display());
        }
    }
    Ok(out)
}

fn run_metrics_batch(a: &MetricsArgs, params: &Params) -> anyhow::Result<()> {
    if !a.gt.is_dir() {
        bail!("{} is a directory but {} is not", a.pred.display(), a.gt.display());
    }
    let Some(out_dir) = a.out.as_deref() else {
        bail!("batch mode needs --out DIR");
    };
    let preds = files_by_stem(&a.pred)?;
    let gts = files_by_stem(&a.gt)?;
    if let Some(s) = preds.keys().find(|s| !gts.contains_key(*s)) {
        bail!("no ground truth for {} in {}", preds[s].display(), a.gt.display());
    }
    if let Some(s) = gts.keys().find(|s| !preds.contains_key(*s)) {
        bail!("no prediction for {} in {}", gts[s].display(), a.pred.display());
    }
    if preds.is_empty() {
        bail!("{} holds no files", a.pred.display());
    }
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let pairs: Vec<(&String, &PathBuf, &PathBuf)> = preds.iter().map(|(s, p)| (s, p, &gts[s])).collect();
    let per_pair: Vec<EvalCounts> = pairs
        .par_iter()
        .map(|(_, p, g)| evaluate_pair(p, g, params))
        .collect::<anyhow::Result<_>>()?;
    let mut pooled = EvalCounts::default();
    for ((stem, p, g), counts) in pairs.iter().zip(&per_pair) {
        let report = counts.to_report(params, vec![display(p), display(g)]);
        io::write_report(&report, out_dir.join(format!("{stem}.json")))?;
        pooled.add(counts);
    }
    let summary = pooled.to_report(params, vec![display(&a.pred), display(&a.gt)]);
    io::write_report(&summary, out_dir.join("summary.json"))?;
    Ok(())
}

fn run_labels(a: &LabelsArgs, params: &Params) -> anyhow::Result<()> {
    let prob = io::read_probability_map(&a.pred)?;
    let gt = io::read_mask(&a.gt)?;
    check_dims(&a.pred, prob.dims(), &a.gt, gt.dims())?;
    let (pyramid, t0) = labelgen::build_labels_with_t0(&gt, &prob, &params.label_config())?;
    if let Some(path) = &a.t0_out {
        io::write_mask(&t0, path)?;
    }
    emit(&io::format_label_pyramid(&pyramid), a.out.as_deref())
}

fn run_render(a: &RenderArgs) -> anyhow::Result<()> {
    if !(a.scale.is_finite() && a.scale > 0.0) {
        bail!("--scale {} must be positive", a.scale);
    }
    let g = io::read_graph(&a.graph)?;
    let extent = |f: fn(&graph::Point) -> f64| {
        g.points()
            .iter()
            .chain(g.edges().iter().flat_map(|e| e.via.iter()))
            .map(f)
            .fold(0.0f64, f64::max)
            .floor() as usize
            + 1
    };
    let width = a.width.unwrap_or_else(|| extent(|p| p.x));
    let height = a.height.unwrap_or_else(|| extent(|p| p.y));
    let scaled = |n: usize| (n as f64 * a.scale).ceil() as usize;
    let mask = graph::render_graph(&g.scaled(a.scale), scaled(width), scaled(height), a.thickness)?;
    io::write_mask(&mask, &a.out)?;
    Ok(())
}

fn read_pyramid(path: &Path) -> anyhow::Result<OutputPyramid> {
    Ok(io::read_output_pyramid(path)?)
}

fn run_loss(a: &LossArgs, params: &Params) -> anyhow::Result<()> {
    let opts = params.loss_options();
    let pred: ProbabilityMap = io::read_probability_map(&a.pred)?;
    let gt = io::read_mask(&a.gt)?;
    check_dims(&a.pred, pred.dims(), &a.gt, gt.dims())?;
    let mut values = BTreeMap::new();
    let bce = losses::bce_loss(&pred, &gt, a.grad_out.is_some(), &opts)?;
    values.insert("bce".to_string(), bce.loss);
    let mut grad = bce.grad_pred;
    let mut inputs = vec![display(&a.pred), display(&a.gt)];
    if let Some(fake_path) = &a.d_fake {
        let d_fake = read_pyramid(fake_path)?;
        inputs.push(display(fake_path));
        let g = losses::generator_loss(&pred, &gt, &d_fake, params.lambda_a, &opts)?;
        values.insert("generator".to_string(), g.loss);
        if a.grad_out.is_some() {
            grad = g.grad_pred;
        }
        if let Some(real_path) = &a.d_real {
            let d_real = read_pyramid(real_path)?;
            inputs.push(display(real_path));
            let labels: LabelPyramid = match &a.labels {
                Some(path) => {
                    inputs.push(display(path));
                    io::read_label_pyramid(path)?
                }
                None => labelgen::build_label_pyramid(&gt, &pred, &params.label_config())?,
            };
            let d = losses::discriminator_loss(&d_fake, &labels, &d_real, &opts)?;
            values.insert("discriminator".to_string(), d.loss);
        }
    } else if a.d_real.is_some() || a.labels.is_some() {
        bail!("--d-real and --labels need --d-fake");
    }
    if let (Some(path), Some(grid)) = (&a.grad_out, &grad) {
        let (w, h) = grid.dims();
        let rows: Vec<&[f64]> = grid.values().chunks(w.max(1)).collect();
        let doc = json!({ "width": w, "height": h, "rows": rows });
        fs::write(path, serde_json::to_string(&doc)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    let report = Report {
        metrics: values,
        params: params.report_block(),
        provenance: io::Provenance::new(inputs),
    };
    emit(&io::format_report(&report), a.out.as_deref())
}
