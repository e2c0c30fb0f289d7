//! All five metrics on one (prediction, ground truth) pair.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{self, RoadGraph};
use crate::io::{Provenance, Report};
use crate::params::Params;
use crate::raster::{self, BinaryMask};

use super::{
    apls_parts, ccq_counts_on_skeletons, holes_marbles_counts, junct_counts, tlts_counts, AplsParts, CcqCounts,
    HolesMarblesCounts, JunctCounts, TltsCounts,
};

/// Ground truth as a raster or as a centerline graph.
#[derive(Clone, Copy, Debug)]
pub enum GroundTruth<'a> {
    Mask(&'a BinaryMask),
    /// Rendered onto the prediction's canvas at `Params::render_thickness`.
    Graph(&'a RoadGraph),
}

/// Raw counts of every metric. Adding counts pools tiles; scores are derived
/// from the pooled counts with a single final division.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalCounts {
    pub ccq: CcqCounts,
    pub tlts: TltsCounts,
    pub apls: AplsParts,
    pub junct: JunctCounts,
    pub holes_marbles: HolesMarblesCounts,
}

impl EvalCounts {
    pub fn add(&mut self, o: &EvalCounts) {
        self.ccq.add(&o.ccq);
        self.tlts.add(&o.tlts);
        self.apls.gt_to_pred.add(&o.apls.gt_to_pred);
        self.apls.pred_to_gt.add(&o.apls.pred_to_gt);
        self.junct.add(&o.junct);
        self.holes_marbles.add(&o.holes_marbles);
    }

    /// Named scores, keyed `family.quantity`.
    pub fn metrics(&self) -> BTreeMap<String, f64> {
        let ccq = self.ccq.result();
        let junct = self.junct.result();
        let hm = self.holes_marbles.result();
        [
            ("ccq.correctness", ccq.correctness),
            ("ccq.completeness", ccq.completeness),
            ("ccq.quality", ccq.quality),
            ("tlts", self.tlts.fraction()),
            ("apls", self.apls.score()),
            ("apls.gt_to_pred", self.apls.gt_to_pred.score()),
            ("apls.pred_to_gt", self.apls.pred_to_gt.score()),
            ("junct.precision", junct.precision),
            ("junct.recall", junct.recall),
            ("junct.f1", junct.f1),
            ("hm.precision", hm.precision),
            ("hm.recall", hm.recall),
            ("hm.f1", hm.f1),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn to_report(&self, params: &Params, inputs: Vec<String>) -> Report {
        Report {
            metrics: self.metrics(),
            params: params.report_block(),
            provenance: Provenance::new(inputs),
        }
    }
}

/// CCQ on the two skeletons and the four graph metrics on the graphs
/// extracted from them. A ground-truth graph is rendered first and then goes
/// through the same extraction as the prediction, so identical inputs give
/// identical graphs.
pub fn evaluate_all(pred: &BinaryMask, gt: GroundTruth<'_>, params: &Params) -> Result<EvalCounts> {
    let rendered;
    let gt_mask = match gt {
        GroundTruth::Mask(m) => m,
        GroundTruth::Graph(g) => {
            rendered = graph::render_graph(g, pred.width(), pred.height(), params.render_thickness)?;
            &rendered
        }
    };
    if pred.dims() != gt_mask.dims() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs ground truth {:?}",
            pred.dims(),
            gt_mask.dims()
        )));
    }
    if params.ccq_tolerance.is_nan() || params.ccq_tolerance < 0.0 {
        return Err(Error::Domain(format!(
            "tolerance {} must be non-negative",
            params.ccq_tolerance
        )));
    }
    let (pred_skel, gt_skel) = rayon::join(|| raster::skeletonize(pred), || raster::skeletonize(gt_mask));
    let ccq = ccq_counts_on_skeletons(&pred_skel, &gt_skel, params.ccq_tolerance);
    // Skeletons are fixed points of thinning, so this equals mask_to_graph.
    let (pred_g, gt_g) = rayon::join(
        || graph::pixel_graph(&pred_skel).contracted(),
        || graph::pixel_graph(&gt_skel).contracted(),
    );
    let tlts = tlts_counts(
        &pred_g,
        &gt_g,
        params.path_sampling(),
        params.tlts_rel_tol,
        params.match_dist,
    )?;
    let apls = apls_parts(&pred_g, &gt_g, params.path_sampling(), params.match_dist)?;
    let junct = junct_counts(&pred_g, &gt_g, &params.junct_params());
    let holes_marbles = holes_marbles_counts(&pred_g, &gt_g, params.hm_sampling(), &params.hm_params())?;
    Ok(EvalCounts {
        ccq,
        tlts,
        apls,
        junct,
        holes_marbles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plus(n: usize) -> BinaryMask {
        let mut m = BinaryMask::zeros(n, n);
        for i in 4..n - 4 {
            m.set(i, n / 2, true);
            m.set(n / 2, i, true);
        }
        m
    }

    #[test]
    fn identity_scores_one() {
        let m = plus(64);
        let c = evaluate_all(&m, GroundTruth::Mask(&m), &Params::default()).unwrap();
        for (k, v) in c.metrics() {
            assert_eq!(v, 1.0, "{k}");
        }
    }

    #[test]
    fn graph_ground_truth_matches_its_rendering() {
        let g = RoadGraph::new(
            vec![
                graph::Point::new(5.0, 30.0),
                graph::Point::new(30.0, 30.0),
                graph::Point::new(58.0, 30.0),
                graph::Point::new(30.0, 5.0),
            ],
            &[(0, 1), (1, 2), (1, 3)],
        )
        .unwrap();
        let m = graph::render_graph(&g, 64, 64, 1).unwrap();
        let c = evaluate_all(&m, GroundTruth::Graph(&g), &Params::default()).unwrap();
        assert!(c.metrics().values().all(|&v| v == 1.0), "{:?}", c.metrics());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = plus(64);
        let b = plus(32);
        assert!(matches!(
            evaluate_all(&a, GroundTruth::Mask(&b), &Params::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn pooled_counts_add_up() {
        let m = plus(64);
        let c = evaluate_all(&m, GroundTruth::Mask(&m), &Params::default()).unwrap();
        let mut total = EvalCounts::default();
        total.add(&c);
        total.add(&c);
        assert_eq!(total.ccq.gt, 2 * c.ccq.gt);
        assert_eq!(total.metrics(), c.metrics());
    }
}
