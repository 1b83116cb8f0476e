//! Pinhole intrinsics and the inverse-depth augmented projection.

use nalgebra::{Matrix3, Matrix3x6, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::se3::{hat, RigidTransform};
use crate::error::{Error, Result};

/// Smallest camera-frame depth (meters) that still projects.
pub const EPS_Z: f64 = 1e-6;
/// Smallest inverse depth (1/m) that still backprojects.
pub const EPS_D: f64 = 1e-8;

/// Pinhole camera intrinsics. Pixel centers sit at integer coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::InvalidArgument("principal point must be finite".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("image size must be positive".into()));
        }
        Ok(())
    }

    /// Intrinsics of the grid obtained by keeping every `factor`-th pixel.
    pub fn downsampled(&self, factor: usize) -> Self {
        let f = factor as f64;
        Self {
            fx: self.fx / f,
            fy: self.fy / f,
            cx: self.cx / f,
            cy: self.cy / f,
            width: self.width / factor,
            height: self.height / factor,
        }
    }

    /// Pixel → normalized image coordinates.
    pub fn normalize(&self, u: f64, v: f64) -> Vector2<f64> {
        Vector2::new((u - self.cx) / self.fx, (v - self.cy) / self.fy)
    }

    /// Normalized image coordinates → pixel.
    pub fn denormalize(&self, x: f64, y: f64) -> Vector2<f64> {
        Vector2::new(self.fx * x + self.cx, self.fy * y + self.cy)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Projects a camera-frame point straight to pixels.
    pub fn project_pixel(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        project(p).map(|a| self.denormalize(a.x, a.y))
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Normalized image point with inverse depth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedPoint {
    pub x: f64,
    pub y: f64,
    /// Inverse depth, 1/m.
    pub d: f64,
}

impl AugmentedPoint {
    pub fn new(x: f64, y: f64, d: f64) -> Self {
        Self { x, y, d }
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.d)
    }
}

/// `Π(X) = (X/Z, Y/Z, 1/Z)`; `None` when `Z ≤ EPS_Z`.
pub fn project(p: &Vector3<f64>) -> Option<AugmentedPoint> {
    if p.z > EPS_Z && p.iter().all(|c| c.is_finite()) {
        let d = 1.0 / p.z;
        Some(AugmentedPoint::new(p.x * d, p.y * d, d))
    } else {
        None
    }
}

/// `Π⁻¹(x) = (x/d, y/d, 1/d)`; `None` when `d ≤ EPS_D`.
pub fn backproject(a: &AugmentedPoint) -> Option<Vector3<f64>> {
    if a.d > EPS_D && a.x.is_finite() && a.y.is_finite() && a.d.is_finite() {
        let z = 1.0 / a.d;
        Some(Vector3::new(a.x * z, a.y * z, z))
    } else {
        None
    }
}

/// Derivative of `Π` at a camera-frame point.
#[rustfmt::skip]
pub fn projection_derivative(p: &Vector3<f64>) -> Matrix3<f64> {
    let iz = 1.0 / p.z;
    let iz2 = iz * iz;
    Matrix3::new(
        iz, 0.0, -p.x * iz2,
        0.0, iz, -p.y * iz2,
        0.0, 0.0, -iz2,
    )
}

/// Which way the image pose enters a reprojection.
#[derive(Clone, Copy, Debug)]
pub enum JacobianDirection<'a> {
    /// `Π(G₀ Gᵢ⁻¹ X)`: the point is already `G₀ Gᵢ⁻¹ X`.
    Forward,
    /// `Π(Gᵢ G₀⁻¹ X)`: the point is `Gᵢ G₀⁻¹ X` and the transform is `Gᵢ G₀⁻¹`.
    Backward(&'a RigidTransform),
}

/// Jacobian of the reprojection of a transformed point with respect to a left
/// perturbation `G₀ ← exp(δξ) G₀`, evaluated at `δξ = 0`.
///
/// `None` when the point is not in front of the camera.
pub fn projection_jacobian(point: &Vector3<f64>, direction: JacobianDirection<'_>) -> Option<Matrix3x6<f64>> {
    if point.z <= EPS_Z {
        return None;
    }
    let dpi = projection_derivative(point);
    let mut dp = Matrix3x6::zeros();
    dp.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    dp.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-hat(point)));
    Some(match direction {
        JacobianDirection::Forward => dpi * dp,
        // Gᵢ (exp(δ) G₀)⁻¹ X = exp(−Ad_T δ) T X
        JacobianDirection::Backward(t) => -(dpi * dp * t.adjoint()),
    })
}
