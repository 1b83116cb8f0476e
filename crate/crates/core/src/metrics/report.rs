//! Per-object evaluation, CSV rows and the recall summary.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::pose_errors::{mspd, mssd, vsd, DEFAULT_DELTA_VIS};
use super::recall::{vsd_taus, RecallSpec};
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, RigidTransform};
use crate::scene::{render_depth, DepthMap, ObjectModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MetricKind {
    Mssd,
    Mspd,
    Vsd,
}

impl MetricKind {
    pub fn label(self) -> &'static str {
        match self {
            MetricKind::Mssd => "MSSD",
            MetricKind::Mspd => "MSPD",
            MetricKind::Vsd => "VSD",
        }
    }
}

/// One error value with its pass flags against the matching threshold grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub metric: MetricKind,
    /// Meters, pixels, or unitless for VSD. Infinite when undefined.
    pub value: f64,
    pub object_id: usize,
    /// VSD tolerance the value was computed at.
    pub tau: Option<f64>,
    pub passes: Vec<bool>,
    /// MSPD with a vertex behind the camera, or VSD with nothing visible.
    pub flagged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub delta_vis: f64,
    /// Multiplies the MSPD pixel thresholds; 1 at 640×480.
    pub mspd_scale: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            delta_vis: DEFAULT_DELTA_VIS,
            mspd_scale: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectEvaluation {
    pub image_id: usize,
    pub object_id: usize,
    pub mssd: PoseError,
    pub mspd: PoseError,
    /// One entry per τ.
    pub vsd: Vec<PoseError>,
}

/// All three metrics for one predicted pose. Renders use the full camera
/// `k`, which is also the MSPD camera.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_object(
    image_id: usize,
    object_id: usize,
    predicted: &RigidTransform,
    truth: &RigidTransform,
    model: &ObjectModel,
    k: &Intrinsics,
    sensor: &DepthMap,
    cfg: &EvalConfig,
) -> Result<ObjectEvaluation> {
    sensor.check_shape(k)?;
    let mk = |metric, value: f64, tau, spec: &RecallSpec, flagged| PoseError {
        metric,
        value,
        object_id,
        tau,
        passes: spec.passes(value),
        flagged,
    };
    let spec_mssd = RecallSpec::mssd(model.diameter);
    let spec_mspd = RecallSpec::mspd(cfg.mspd_scale);
    let spec_vsd = RecallSpec::vsd();
    let e_mssd = mk(MetricKind::Mssd, mssd(predicted, truth, model), None, &spec_mssd, false);
    let e_mspd = match mspd(predicted, truth, model, k) {
        Ok(v) => mk(MetricKind::Mspd, v, None, &spec_mspd, false),
        Err(Error::MetricUndefined(m)) => {
            log::warn!("image {image_id} object {object_id}: MSPD undefined ({m})");
            mk(MetricKind::Mspd, f64::INFINITY, None, &spec_mspd, true)
        }
        Err(e) => return Err(e),
    };
    let d_hat = render_depth(model, predicted, k);
    let d_bar = render_depth(model, truth, k);
    let mut e_vsd = Vec::new();
    for tau in vsd_taus(model.diameter) {
        let out = vsd(&d_hat, &d_bar, sensor, tau, cfg.delta_vis)?;
        e_vsd.push(mk(MetricKind::Vsd, out.value, Some(tau), &spec_vsd, out.empty_union));
    }
    Ok(ObjectEvaluation {
        image_id,
        object_id,
        mssd: e_mssd,
        mspd: e_mspd,
        vsd: e_vsd,
    })
}

/// Recall per metric and their mean, as in the usual benchmark tables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecallSummary {
    #[serde(rename = "Avg")]
    pub avg: f64,
    #[serde(rename = "MSPD")]
    pub mspd: f64,
    #[serde(rename = "VSD")]
    pub vsd: f64,
    #[serde(rename = "MSSD")]
    pub mssd: f64,
    pub objects: usize,
}

fn pass_ratio<'a>(errors: impl Iterator<Item = &'a PoseError>) -> f64 {
    let (mut passed, mut total) = (0usize, 0usize);
    for e in errors {
        passed += e.passes.iter().filter(|&&p| p).count();
        total += e.passes.len();
    }
    passed as f64 / total as f64
}

pub fn summarize(evals: &[ObjectEvaluation]) -> Result<RecallSummary> {
    if evals.is_empty() {
        return Err(Error::Empty("no evaluated objects".into()));
    }
    let mssd = pass_ratio(evals.iter().map(|e| &e.mssd));
    let mspd = pass_ratio(evals.iter().map(|e| &e.mspd));
    let vsd = pass_ratio(evals.iter().flat_map(|e| &e.vsd));
    Ok(RecallSummary {
        avg: (mspd + vsd + mssd) / 3.0,
        mspd,
        vsd,
        mssd,
        objects: evals.len(),
    })
}

/// `image_id,object_id,metric,tau,value`; `tau` is empty except for VSD.
pub fn write_csv(mut w: impl Write, evals: &[ObjectEvaluation]) -> std::io::Result<()> {
    writeln!(w, "image_id,object_id,metric,tau,value")?;
    for e in evals {
        for err in std::iter::once(&e.mssd).chain(std::iter::once(&e.mspd)).chain(&e.vsd) {
            let tau = err.tau.map(|t| format!("{t}")).unwrap_or_default();
            let value = if err.value.is_finite() {
                format!("{}", err.value)
            } else {
                "undefined".to_string()
            };
            writeln!(
                w,
                "{},{},{},{},{}",
                e.image_id,
                e.object_id,
                err.metric.label(),
                tau,
                value
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{synthetic_scene, Scene};
    use nalgebra::Vector3;

    fn eval(scene: &Scene, pred: &RigidTransform) -> ObjectEvaluation {
        evaluate_object(
            0,
            1,
            pred,
            &scene.gt_pose,
            &scene.model,
            &scene.intrinsics,
            &scene.depth,
            &EvalConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn perfect_predictions_score_one() {
        let s = synthetic_scene(0, 7);
        let e = eval(&s, &s.gt_pose);
        assert_eq!(e.vsd.len(), 10);
        let sum = summarize(&[e]).unwrap();
        assert_eq!((sum.avg, sum.mspd, sum.vsd, sum.mssd), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn far_off_translation_fails_mssd() {
        let s = synthetic_scene(1, 7);
        let off = RigidTransform::new(
            s.gt_pose.rotation,
            s.gt_pose.translation + Vector3::new(0.6 * s.model.diameter, 0.0, 0.0),
        );
        let sum = summarize(&[eval(&s, &off)]).unwrap();
        assert_eq!(sum.mssd, 0.0);
        assert!(sum.avg < 1.0);
    }

    #[test]
    fn summary_and_csv_formats() {
        let s = synthetic_scene(2, 7);
        let e = eval(&s, &s.gt_pose);
        let json = serde_json::to_value(summarize(std::slice::from_ref(&e)).unwrap()).unwrap();
        for key in ["Avg", "MSPD", "VSD", "MSSD"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        let mut buf = Vec::new();
        write_csv(&mut buf, &[e]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 12);
        assert!(text.lines().nth(1).unwrap().starts_with("0,1,MSSD,,"));
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn undefined_mspd_fails_every_threshold() {
        let s = synthetic_scene(3, 7);
        let behind = RigidTransform::new(s.gt_pose.rotation, Vector3::new(0.0, 0.0, -0.5));
        let e = eval(&s, &behind);
        assert!(e.mspd.flagged && e.mspd.passes.iter().all(|p| !p));
        let mut buf = Vec::new();
        write_csv(&mut buf, &[e]).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("MSPD,,undefined"));
    }
}
