//! Render viewpoints around the current estimate.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{so3_exp, RigidTransform};

/// Input modality. RGB-D uses the sensor depth for the image; RGB renders
/// it from the current estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    #[default]
    Rgbd,
    Rgb,
}

impl InputMode {
    /// 7 views for RGB-D, 13 for RGB.
    pub fn default_views(self) -> usize {
        match self {
            InputMode::Rgbd => 7,
            InputMode::Rgb => 13,
        }
    }
}

pub const DEFAULT_VIEW_ANGLE_DEG: f64 = 22.5;
pub const MAX_VIEWS: usize = 13;

/// `G` followed by `G·R(±θ)` about the object x, y and z axes, then the same
/// at `2θ`. Order: `G, +x, −x, +y, −y, +z, −z, +2x, −2x, ...`.
///
/// Rotations are about the object frame of `G`, so the object origin stays
/// where the estimate puts it.
pub fn perturbed_view_poses_with(g: &RigidTransform, count: usize, angle_deg: f64) -> Result<Vec<RigidTransform>> {
    if !(1..=MAX_VIEWS).contains(&count) {
        return Err(Error::InvalidArgument(format!(
            "view count must be in 1..={MAX_VIEWS}, got {count}"
        )));
    }
    if !(angle_deg > 0.0 && angle_deg < 90.0) {
        return Err(Error::InvalidArgument(format!(
            "view angle must be in (0°, 90°), got {angle_deg}"
        )));
    }
    let mut out = vec![*g];
    for ring in [1.0, 2.0] {
        for axis in [Vector3::x(), Vector3::y(), Vector3::z()] {
            for sign in [1.0, -1.0] {
                let r = so3_exp(&(axis * (sign * ring * angle_deg.to_radians())));
                out.push(RigidTransform::new(g.rotation * r, g.translation));
            }
        }
    }
    out.truncate(count);
    Ok(out)
}

/// The default view set of `mode` at 22.5°.
pub fn perturbed_view_poses(g: &RigidTransform, mode: InputMode) -> Vec<RigidTransform> {
    perturbed_view_poses_with(g, mode.default_views(), DEFAULT_VIEW_ANGLE_DEG).expect("default view set is valid")
}
