//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use roadtopo::graph::render_graph;
use roadtopo::io;
use roadtopo::labelgen::{self, LabelConfig, LabelMatrix, LabelPyramid};
use roadtopo::losses::{self, LossOptions, OutputPyramid};
use roadtopo::metrics::{self, GroundTruth, HolesMarblesParams, JunctParams, Sampling};
use roadtopo::params::Params;
use roadtopo::raster::{self, components_8, dilate, skeletonize};
use roadtopo::{BinaryMask, ProbabilityMap, RealGrid, RoadGraph};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.2}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

fn identity_suite() -> Outcome {
    let t = Instant::now();
    let params = Params::default();
    for seed in 0..20u64 {
        let mut r = rng(seed);
        let m = road_mask(&mut r, 128, 128, 6);
        let counts = metrics::evaluate_all(&m, GroundTruth::Mask(&m), &params).map_err(|e| e.to_string())?;
        for (k, v) in counts.metrics() {
            ensure((v - 1.0).abs() <= 1e-9, || format!("mask seed {seed}: {k} = {v}"))?;
        }

        let g = loop {
            let g = random_graph(&mut r, 12, 300.0);
            if g.edge_count() > 0 {
                break g;
            }
        };
        let s = Sampling::Random { n: 500, seed };
        let scores = [
            ("tlts", metrics::tlts(&g, &g, s, 0.05, 25.0).map_err(|e| e.to_string())?),
            ("apls", metrics::apls(&g, &g, s, 25.0).map_err(|e| e.to_string())?),
            ("junct.f1", metrics::junct(&g, &g, &JunctParams::default()).f1),
            (
                "hm.f1",
                metrics::holes_and_marbles(
                    &g,
                    &g,
                    Sampling::Random { n: 1000, seed },
                    &HolesMarblesParams::default(),
                )
                .map_err(|e| e.to_string())?
                .f1,
            ),
        ];
        for (k, v) in scores {
            ensure((v - 1.0).abs() <= 1e-9, || format!("graph seed {seed}: {k} = {v}"))?;
        }
    }
    within(t.elapsed(), 10.0)?;
    Ok(format!("20 masks and 20 graphs, {:.2}s", t.elapsed().as_secs_f64()))
}

fn write_pgm(path: &Path, m: &BinaryMask) {
    io::write_mask(m, path).unwrap();
}

fn paper_constants() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut r = rng(1);
    let m = road_mask(&mut r, 96, 96, 4);
    let (p, g, out) = (
        dir.path().join("p.pgm"),
        dir.path().join("g.pgm"),
        dir.path().join("r.json"),
    );
    write_pgm(&p, &m);
    write_pgm(&g, &m);
    let argv = [
        "roadtopo",
        "metrics",
        "--pred",
        p.to_str().unwrap(),
        "--gt",
        g.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    let code = roadtopo::cli::run(argv);
    ensure(code == 0, || format!("metrics exited {code}"))?;
    let report = io::read_report(&out).map_err(|e| e.to_string())?;
    let params = &report.params;
    let expect: &[(&str, serde_json::Value)] = &[
        ("threshold", 0.5.into()),
        ("dilation", 3.into()),
        ("cell", 32.into()),
        ("min_interruption", 4.into()),
        ("ccq_tolerance", 2.0.into()),
        ("tlts_rel_tol", 0.05.into()),
        ("match_dist", 25.0.into()),
        ("hm_radius", 300.0.into()),
        ("hm_samples", 1000.into()),
        ("lambda_a", 0.005.into()),
        ("patch_sizes", serde_json::json!([256, 128, 64, 32])),
    ];
    for (key, want) in expect {
        ensure(&params[*key] == want, || {
            format!("{key}: report has {}, want {want}", params[*key])
        })?;
    }
    // H&M matches control points at the shared node-matching distance.
    let hm = Params::default().hm_params();
    ensure(hm.match_dist == params["match_dist"].as_f64().unwrap(), || {
        "H&M match distance".into()
    })?;
    Ok(format!("{} keys checked in the report", expect.len() + 1))
}

/// A 256 x 256 cross of 3-px roads with the prediction missing `gap` columns of
/// the horizontal road starting at x = 100 (inside finest cell row 2, col 3).
fn label_fixture(gap: usize) -> (BinaryMask, ProbabilityMap) {
    let mut gt = BinaryMask::zeros(256, 256);
    stroke(&mut gt, (0.0, 80.0), (255.0, 80.0), 1);
    stroke(&mut gt, (200.0, 0.0), (200.0, 255.0), 1);
    let prob: Vec<f64> = gt
        .bits()
        .iter()
        .enumerate()
        .map(|(i, &b)| {
            let x = i % 256;
            let in_gap = (100..100 + gap).contains(&x) && (70..=90).contains(&(i / 256));
            if b && !in_gap {
                0.9
            } else {
                0.1
            }
        })
        .collect();
    (gt, ProbabilityMap::new(256, 256, prob).unwrap())
}

fn and_reduce(fine: &LabelMatrix) -> Vec<bool> {
    let (rows, cols) = (fine.rows() / 2, fine.cols() / 2);
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push(
                fine.get(2 * r, 2 * c)
                    && fine.get(2 * r, 2 * c + 1)
                    && fine.get(2 * r + 1, 2 * c)
                    && fine.get(2 * r + 1, 2 * c + 1),
            );
        }
    }
    out
}

fn label_fixtures() -> Outcome {
    let t = Instant::now();
    let config = LabelConfig::default();
    let (gt, prob) = label_fixture(6);
    let p = labelgen::build_label_pyramid(&gt, &prob, &config).map_err(|e| e.to_string())?;
    ensure(p.finest().zeros() == vec![(2, 3)], || {
        format!("finest zeros {:?}", p.finest().zeros())
    })?;
    let levels = p.levels();
    for k in 0..levels.len() - 1 {
        ensure(levels[k].labels() == and_reduce(&levels[k + 1]).as_slice(), || {
            format!("level {k} is not the AND-reduction of level {}", k + 1)
        })?;
    }
    let expected_zeros = [vec![(0, 0)], vec![(0, 0)], vec![(1, 1)], vec![(2, 3)]];
    for (k, z) in expected_zeros.iter().enumerate() {
        ensure(&levels[k].zeros() == z, || {
            format!("level {k} zeros {:?}", levels[k].zeros())
        })?;
    }

    let (gt, prob) = label_fixture(3);
    let p = labelgen::build_label_pyramid(&gt, &prob, &config).map_err(|e| e.to_string())?;
    ensure(p == LabelPyramid::all_ones(256, 256, &config).unwrap(), || {
        "3-px gap flagged a cell".into()
    })?;
    within(t.elapsed(), 1.0)?;
    Ok(format!(
        "6-px gap -> one zero, 3-px gap -> all ones, {:.3}s",
        t.elapsed().as_secs_f64()
    ))
}

fn ccq_oracle() -> Outcome {
    let t = Instant::now();
    let mut r = rng(4);
    for case in 0..200 {
        let (w, h) = (r.gen_range(1..=32), r.gen_range(1..=32));
        let pred = random_mask(&mut r, w, h);
        let gt = random_mask(&mut r, w, h);
        let got = metrics::ccq(&pred, &gt, 2.0).map_err(|e| e.to_string())?;
        let counts = oracle_ccq_counts(&skeletonize(&pred), &skeletonize(&gt), 2.0);
        let (c, m, q) = oracle_ccq_scores(&counts);
        ensure((got.correctness, got.completeness, got.quality) == (c, m, q), || {
            format!("case {case}: {got:?} vs oracle ({c}, {m}, {q})")
        })?;
    }
    within(t.elapsed(), 30.0)?;
    Ok(format!("200 pairs, {:.2}s", t.elapsed().as_secs_f64()))
}

fn graph_oracles() -> Outcome {
    let t = Instant::now();
    let mut r = rng(5);
    let mut checked = 0;
    for case in 0..60 {
        let n = r.gen_range(6..=20);
        let gt = random_graph(&mut r, n, 200.0);
        if gt.edge_count() == 0 {
            continue;
        }
        let pred = match case % 3 {
            0 => gt.clone(),
            1 => perturbed(&mut r, &gt, 4.0),
            _ => perturbed(&mut r, &gt, 20.0),
        };
        let tl = metrics::tlts(&pred, &gt, Sampling::Exhaustive, 0.05, 25.0).map_err(|e| e.to_string())?;
        let tl_o = oracle_tlts(&pred, &gt, 0.05, 25.0);
        ensure((tl - tl_o).abs() <= 1e-9, || {
            format!("case {case}: tlts {tl} vs {tl_o}")
        })?;
        if pred.edge_count() > 0 {
            let ap = metrics::apls(&pred, &gt, Sampling::Exhaustive, 25.0).map_err(|e| e.to_string())?;
            let ap_o = oracle_apls(&pred, &gt, 25.0);
            ensure((ap - ap_o).abs() <= 1e-9, || {
                format!("case {case}: apls {ap} vs {ap_o}")
            })?;
        }
        for radius in [60.0, 300.0] {
            let hp = HolesMarblesParams {
                radius,
                match_dist: 25.0,
                spacing: 10.0,
            };
            let c = metrics::holes_marbles_counts(&pred, &gt, Sampling::Exhaustive, &hp).map_err(|e| e.to_string())?;
            let o = oracle_holes_marbles(&pred, &gt, radius, 10.0, 25.0);
            ensure((c.holes, c.matched_holes, c.marbles, c.matched_marbles) == o, || {
                format!("case {case} radius {radius}: H&M {c:?} vs {o:?}")
            })?;
        }
        checked += 1;
    }
    within(t.elapsed(), 30.0)?;
    Ok(format!("{checked} fixtures, {:.2}s", t.elapsed().as_secs_f64()))
}

fn away_from_clamp(r: &mut rand_chacha::ChaCha8Rng) -> f64 {
    r.gen_range(0.02..0.98)
}

/// Central difference of `f` at each coordinate of `x`, compared with `grad`.
fn check_grad(name: &str, x: &[f64], grad: &[f64], f: &dyn Fn(&[f64]) -> f64) -> Result<(), String> {
    const H: f64 = 1e-5;
    let mut xs = x.to_vec();
    for i in 0..x.len() {
        xs[i] = x[i] + H;
        let up = f(&xs);
        xs[i] = x[i] - H;
        let down = f(&xs);
        xs[i] = x[i];
        let fd = (up - down) / (2.0 * H);
        let e = rel_err(grad[i], fd);
        ensure(e < 1e-4, || {
            format!("{name}[{i}]: analytic {} vs numeric {fd} (rel {e:e})", grad[i])
        })?;
    }
    Ok(())
}

fn small_labels(r: &mut rand_chacha::ChaCha8Rng) -> LabelPyramid {
    let finest = LabelMatrix::new(4, 4, 4, (0..16).map(|_| r.gen_bool(0.7)).collect()).unwrap();
    LabelPyramid::from_finest(finest, 3).unwrap()
}

fn flatten(p: &OutputPyramid) -> Vec<f64> {
    p.levels().iter().flat_map(|l| l.values.iter().copied()).collect()
}

fn unflatten(like: &OutputPyramid, v: &[f64]) -> OutputPyramid {
    let mut levels = like.levels().to_vec();
    let mut i = 0;
    for l in &mut levels {
        let n = l.values.len();
        l.values.copy_from_slice(&v[i..i + n]);
        i += n;
    }
    OutputPyramid::new(levels).unwrap()
}

fn gradient_suite() -> Outcome {
    let t = Instant::now();
    let mut r = rng(6);
    for normalize in [false, true] {
        let opts = LossOptions {
            normalize,
            ..Default::default()
        };
        for inst in 0..100 {
            let (w, h) = (16, 16);
            let pv: Vec<f64> = (0..w * h).map(|_| away_from_clamp(&mut r)).collect();
            let gt = noise_mask(&mut r, w, h, 0.4);
            let pred = ProbabilityMap::new(w, h, pv.clone()).unwrap();
            let pmap = |v: &[f64]| ProbabilityMap::new(w, h, v.to_vec()).unwrap();

            let bce = losses::bce_loss(&pred, &gt, true, &opts).unwrap();
            check_grad(&format!("bce#{inst}"), &pv, bce.grad_pred.unwrap().values(), &|v| {
                losses::bce_loss(&pmap(v), &gt, false, &opts).unwrap().loss
            })?;

            let labels = small_labels(&mut r);
            let fake = OutputPyramid::from_fn(&labels, |_, _| away_from_clamp(&mut r)).unwrap();
            let real = OutputPyramid::from_fn(&labels, |_, _| away_from_clamp(&mut r)).unwrap();
            let d = losses::discriminator_loss(&fake, &labels, &real, &opts).unwrap();
            let ff = flatten(&fake);
            let rf = flatten(&real);
            let gf: Vec<f64> = d.grad_d_fake.unwrap().concat();
            let gr: Vec<f64> = d.grad_d_real.unwrap().concat();
            check_grad(&format!("disc.fake#{inst}"), &ff, &gf, &|v| {
                losses::discriminator_loss(&unflatten(&fake, v), &labels, &real, &opts)
                    .unwrap()
                    .loss
            })?;
            check_grad(&format!("disc.real#{inst}"), &rf, &gr, &|v| {
                losses::discriminator_loss(&fake, &labels, &unflatten(&real, v), &opts)
                    .unwrap()
                    .loss
            })?;

            let lambda = if inst % 2 == 0 {
                losses::DEFAULT_LAMBDA_A
            } else {
                r.gen_range(0.0..2.0)
            };
            let g = losses::generator_loss(&pred, &gt, &fake, lambda, &opts).unwrap();
            check_grad(&format!("gen.pred#{inst}"), &pv, g.grad_pred.unwrap().values(), &|v| {
                losses::generator_loss(&pmap(v), &gt, &fake, lambda, &opts)
                    .unwrap()
                    .loss
            })?;
            check_grad(
                &format!("gen.fake#{inst}"),
                &ff,
                &g.grad_d_fake.unwrap().concat(),
                &|v| {
                    losses::generator_loss(&pred, &gt, &unflatten(&fake, v), lambda, &opts)
                        .unwrap()
                        .loss
                },
            )?;

            let upstream = RealGrid::new(w, h, (0..w * h).map(|_| r.gen_range(-5.0..5.0)).collect()).unwrap();
            let passed = raster::ste_backward(&upstream, &pred).unwrap();
            ensure(passed == upstream, || {
                format!("ste_backward#{inst} is not the identity")
            })?;
        }
    }
    within(t.elapsed(), 30.0)?;
    Ok(format!(
        "3 kernels x 100 instances x 2 reductions, {:.2}s",
        t.elapsed().as_secs_f64()
    ))
}

fn closed_form_loss() -> Outcome {
    let labels = LabelPyramid::all_ones(256, 256, &LabelConfig::default()).unwrap();
    let half = OutputPyramid::filled_like(&labels, 0.5).unwrap();
    ensure(half.cell_count() == 85, || format!("{} cells", half.cell_count()))?;
    let v = losses::discriminator_loss(&half, &labels, &half, &LossOptions::default()).unwrap();
    let want = 170.0 * std::f64::consts::LN_2;
    ensure((v.loss - want).abs() <= 1e-9, || format!("{} vs {want}", v.loss))?;
    Ok(format!("{:.12} = 170 ln 2", v.loss))
}

fn morphology_laws() -> Outcome {
    let t = Instant::now();
    let mut r = rng(8);
    for case in 0..100 {
        let m = random_mask(&mut r, 64, 64);
        let (a, b) = (r.gen_range(0..4), r.gen_range(0..4));
        ensure(dilate(&dilate(&m, a), b) == dilate(&m, a + b), || {
            format!("case {case}: composition {a}+{b}")
        })?;
        ensure(m.is_subset_of(&dilate(&m, a)), || format!("case {case}: extensivity"))?;
        let mut bigger = m.clone();
        for (x, y) in noise_mask(&mut r, 64, 64, 0.1).ones_iter() {
            bigger.set(x, y, true);
        }
        ensure(dilate(&m, b).is_subset_of(&dilate(&bigger, b)), || {
            format!("case {case}: monotonicity")
        })?;
        let s = skeletonize(&m);
        ensure(s.is_subset_of(&m), || format!("case {case}: skeleton escapes the mask"))?;
        ensure(skeletonize(&s) == s, || format!("case {case}: skeleton not idempotent"))?;
        let (cm, cs) = (components_8(&m).len(), components_8(&s).len());
        ensure(cm == cs, || format!("case {case}: {cm} components became {cs}"))?;
    }
    within(t.elapsed(), 60.0)?;
    Ok(format!("100 masks, {:.2}s", t.elapsed().as_secs_f64()))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let mut r = rng(9);
    std::fs::create_dir_all(d.join("pred")).unwrap();
    std::fs::create_dir_all(d.join("gt")).unwrap();
    for tile in 0..3 {
        let gt = road_mask(&mut r, 192, 192, 8);
        let mut pred = gt.clone();
        for (x, y) in noise_mask(&mut r, 192, 192, 0.01).ones_iter() {
            pred.set(x, y, !pred.get(x, y));
        }
        write_pgm(&d.join(format!("pred/t{tile}.pgm")), &pred);
        write_pgm(&d.join(format!("gt/t{tile}.pgm")), &gt);
    }
    let p = d.join("pred/t0.pgm");
    let g = d.join("gt/t0.pgm");
    let mut outputs = Vec::new();
    for (run, workers) in ["1", "1", "2", "4"].iter().enumerate() {
        let out = d.join(format!("single{run}.json"));
        let code = roadtopo::cli::run([
            "roadtopo",
            "metrics",
            "--pred",
            p.to_str().unwrap(),
            "--gt",
            g.to_str().unwrap(),
            "--seed",
            "11",
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
        ]);
        ensure(code == 0, || format!("metrics exited {code}"))?;
        outputs.push(std::fs::read(&out).unwrap());

        let batch = d.join(format!("batch{run}"));
        let code = roadtopo::cli::run([
            "roadtopo",
            "metrics",
            "--pred",
            d.join("pred").to_str().unwrap(),
            "--gt",
            d.join("gt").to_str().unwrap(),
            "--seed",
            "11",
            "--workers",
            workers,
            "--out",
            batch.to_str().unwrap(),
        ]);
        ensure(code == 0, || format!("batch metrics exited {code}"))?;
        let mut files = Vec::new();
        for name in ["t0.json", "t1.json", "t2.json", "summary.json"] {
            files.push(std::fs::read(batch.join(name)).map_err(|e| format!("{name}: {e}"))?);
        }
        outputs.push(files.concat());
    }
    for run in 1..4 {
        ensure(outputs[2 * run] == outputs[0], || {
            format!("single-pair run {run} differs")
        })?;
        ensure(outputs[2 * run + 1] == outputs[1], || {
            format!("batch run {run} differs")
        })?;
    }
    Ok("4 runs x (single pair + 3-tile batch), workers 1/1/2/4".into())
}

/// A 4096 x 4096 road network: a jittered grid with diagonals, 5 to 7 px wide.
fn city(r: &mut rand_chacha::ChaCha8Rng) -> RoadGraph {
    let (n, step) = (16usize, 4096.0 / 16.0);
    let mut points = Vec::new();
    for i in 0..n {
        for j in 0..n {
            points.push(roadtopo::Point::new(
                (j as f64 + 0.5) * step + r.gen_range(-40.0..40.0),
                (i as f64 + 0.5) * step + r.gen_range(-40.0..40.0),
            ));
        }
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let v = i * n + j;
            if j + 1 < n && r.gen_bool(0.9) {
                edges.push((v, v + 1));
            }
            if i + 1 < n && r.gen_bool(0.9) {
                edges.push((v, v + n));
            }
            if i + 1 < n && j + 1 < n && r.gen_bool(0.15) {
                edges.push((v, v + n + 1));
            }
        }
    }
    RoadGraph::new(points, &edges).unwrap()
}

fn performance() -> Outcome {
    let mut r = rng(10);
    let gt_graph = city(&mut r);
    let gt = render_graph(&gt_graph, 4096, 4096, 7).unwrap();
    let pred_graph = perturbed(&mut r, &gt_graph, 3.0);
    let pred = render_graph(&pred_graph, 4096, 4096, 5).unwrap();
    let t = Instant::now();
    let counts = metrics::evaluate_all(&pred, GroundTruth::Mask(&gt), &Params::default()).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let m = counts.metrics();
    ensure(m.values().all(|v| (0.0..=1.0).contains(v)), || {
        format!("out of range: {m:?}")
    })?;
    within(elapsed, 60.0)?;
    Ok(format!(
        "4096x4096 in {:.1}s on {} thread(s) (apls {:.3}, tlts {:.3}, hm.f1 {:.3})",
        elapsed.as_secs_f64(),
        rayon::current_num_threads(),
        m["apls"],
        m["tlts"],
        m["hm.f1"]
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("identity suite", identity_suite),
        ("default constants in report", paper_constants),
        ("label pyramid fixtures", label_fixtures),
        ("CCQ vs brute-force oracle", ccq_oracle),
        ("graph metrics vs exhaustive oracles", graph_oracles),
        ("loss gradients vs finite differences", gradient_suite),
        ("all-0.5 discriminator loss", closed_form_loss),
        ("morphology laws", morphology_laws),
        ("determinism across runs and workers", determinism),
        ("4096x4096 performance bound", performance),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|s| name.contains(s.as_str())) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {:>2}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:>2}. {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
