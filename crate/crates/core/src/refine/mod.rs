//! The coupled refinement loop, its render viewpoints, the per-pixel inputs
//! handed to revision providers, and the providers themselves.

mod provider;
mod residuals;
mod run;
mod views;

pub use provider::{
    CorrelationMatchProvider, FeatureView, OracleConfig, OracleProvider, ProviderInput, ProviderOutput,
    RevisionProvider,
};
pub use residuals::{depth_residuals, solver_residual_features};
pub use run::{
    assemble_problem, refine_many, refine_pose, render_field, InnerRecord, Refinement, RefinementConfig, DEFAULT_INNER,
    DEFAULT_OUTER, FINAL_OUTER,
};
pub use views::{perturbed_view_poses, perturbed_view_poses_with, InputMode, DEFAULT_VIEW_ANGLE_DEG, MAX_VIEWS};

#[cfg(test)]
mod tests;
