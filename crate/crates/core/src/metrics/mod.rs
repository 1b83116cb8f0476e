//! Symmetry-aware pose error metrics, recall over threshold grids, and the
//! pose and flow losses.

mod losses;
mod pose_errors;
mod recall;
mod report;

pub use losses::{flow_loss, FlowLoss};
pub use pose_errors::{
    mspd, mssd, pose_loss, visibility_mask, vsd, VsdOutcome, DEFAULT_DELTA_VIS, DEFAULT_TRANSLATION_WEIGHT,
};
pub use recall::{recall, vsd_taus, RecallSpec};
pub use report::{
    evaluate_object, summarize, write_csv, EvalConfig, MetricKind, ObjectEvaluation, PoseError, RecallSummary,
};
