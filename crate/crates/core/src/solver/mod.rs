//! The bidirectional depth-augmented PnP layer: objective, damped
//! Gauss-Newton on SE(3), the joint pose/depth variant for RGB input, and
//! reverse-mode gradients through the unrolled iterations.

mod dual;
mod fields;
mod gauss_newton;
mod gradcheck;
mod linearize;
mod problem;
mod random;
mod rgb;
mod vjp;

pub use dual::{solve_spd, Dual6, Real};
pub use fields::{apply_revisions, effective_weight, ConfidenceField, RevisionField, W_MAX};
pub use gauss_newton::{
    gauss_newton_step, gauss_newton_step_detailed, solve, IterationRecord, SolveTrace, StepOutcome, MAX_ESCALATIONS,
};
pub use gradcheck::{gradcheck, GradcheckResult, GradcheckSpec};
pub use linearize::{linearize, objective, LinearRow};
pub use problem::{
    BdpnpProblem, Direction, DirectionMode, DirectionalTerm, SolverOptions, ViewPair, DEFAULT_DAMPING,
    INFERENCE_ITERATIONS, TRAINING_ITERATIONS,
};
pub use random::{random_problem, RandomProblemSpec};
pub use rgb::{rgb_joint_rows, rgb_schur_step, solve_rgb, DepthPolicy, JointRow, JointStep};
pub use vjp::{solver_vjp, SolverGradients, ViewGradients};
