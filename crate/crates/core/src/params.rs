//! The resolved parameter set shared by the CLI, reports and config files.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::graph;
use crate::labelgen::{self, LabelConfig};
use crate::losses::{self, LossOptions};
use crate::metrics::{self, HolesMarblesParams, JunctParams, Sampling};
use crate::raster;

/// Every tunable knob, with the published defaults.
///
/// Deserializing a partial document (a config file) fills missing fields with
/// their defaults; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub threshold: f64,
    pub dilation: usize,
    pub cell: usize,
    pub min_interruption: usize,
    pub levels: usize,
    pub ccq_tolerance: f64,
    pub match_dist: f64,
    pub tlts_rel_tol: f64,
    /// Sampled node pairs for TLTS and APLS.
    pub path_samples: usize,
    pub hm_radius: f64,
    pub hm_samples: usize,
    pub hm_spacing: f64,
    pub junct_match_dist: f64,
    pub junct_max_angle_deg: f64,
    pub junct_probe: f64,
    pub lambda_a: f64,
    pub log_eps: f64,
    pub normalize_loss: bool,
    pub seed: u64,
    /// Enumerate every pair / start node instead of sampling.
    pub exhaustive: bool,
    /// Line thickness used when a ground-truth graph is rendered to a mask.
    pub render_thickness: usize,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            threshold: raster::DEFAULT_THRESHOLD,
            dilation: raster::DEFAULT_DILATION,
            cell: labelgen::DEFAULT_CELL,
            min_interruption: labelgen::DEFAULT_MIN_INTERRUPTION,
            levels: labelgen::DEFAULT_LEVELS,
            ccq_tolerance: metrics::DEFAULT_CCQ_TOLERANCE,
            match_dist: graph::DEFAULT_MATCH_DIST,
            tlts_rel_tol: metrics::DEFAULT_TLTS_REL_TOL,
            path_samples: metrics::DEFAULT_PATH_SAMPLES,
            hm_radius: metrics::DEFAULT_HM_RADIUS,
            hm_samples: metrics::DEFAULT_HM_SAMPLES,
            hm_spacing: metrics::DEFAULT_HM_SPACING,
            junct_match_dist: graph::DEFAULT_MATCH_DIST,
            junct_max_angle_deg: metrics::DEFAULT_JUNCT_MAX_ANGLE_DEG,
            junct_probe: metrics::DEFAULT_JUNCT_PROBE,
            lambda_a: losses::DEFAULT_LAMBDA_A,
            log_eps: losses::DEFAULT_EPS,
            normalize_loss: false,
            seed: 0,
            exhaustive: false,
            render_thickness: 1,
        }
    }
}

impl Params {
    pub fn label_config(&self) -> LabelConfig {
        LabelConfig {
            threshold: self.threshold,
            dilation: self.dilation,
            cell: self.cell,
            min_interruption: self.min_interruption,
            levels: self.levels,
        }
    }

    pub fn loss_options(&self) -> LossOptions {
        LossOptions {
            eps: self.log_eps,
            normalize: self.normalize_loss,
        }
    }

    pub fn junct_params(&self) -> JunctParams {
        JunctParams {
            match_dist: self.junct_match_dist,
            max_angle_deg: self.junct_max_angle_deg,
            probe: self.junct_probe,
        }
    }

    pub fn hm_params(&self) -> HolesMarblesParams {
        HolesMarblesParams {
            radius: self.hm_radius,
            match_dist: self.match_dist,
            spacing: self.hm_spacing,
        }
    }

    pub fn path_sampling(&self) -> Sampling {
        self.sampling(self.path_samples)
    }

    pub fn hm_sampling(&self) -> Sampling {
        self.sampling(self.hm_samples)
    }

    fn sampling(&self, n: usize) -> Sampling {
        if self.exhaustive {
            Sampling::Exhaustive
        } else {
            Sampling::Random { n, seed: self.seed }
        }
    }

    /// Parameter block embedded in reports: every field, the derived pyramid
    /// patch sizes, and the seed and sample count of each randomized metric.
    pub fn report_block(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("params serialize");
        let obj = v.as_object_mut().unwrap();
        obj.insert("patch_sizes".into(), json!(self.label_config().patch_sizes()));
        let mode = if self.exhaustive { "exhaustive" } else { "random" };
        let entry = |n: usize| json!({ "mode": mode, "samples": n, "seed": self.seed });
        obj.insert(
            "sampling".into(),
            json!({
                "tlts": entry(self.path_samples),
                "apls": entry(self.path_samples),
                "holes_marbles": entry(self.hm_samples),
            }),
        );
        v
    }
}
