//! SE(3) algebra, pinhole intrinsics, the inverse-depth augmented projection
//! and dense correspondence fields.

mod camera;
mod field;
mod se3;

pub use camera::{
    backproject, project, projection_derivative, projection_jacobian, AugmentedPoint, Intrinsics, JacobianDirection,
    EPS_D, EPS_Z,
};
pub use field::{induce_correspondence, sample_bilinear, CorrespondenceField, ScalarField};
pub use se3::{
    hat, retract, rotation_angle, se3_exp, se3_left_jacobian, se3_log, se3_log_with_branch, so3_exp, so3_left_jacobian,
    vee, LogBranch, RigidTransform, Twist,
};
