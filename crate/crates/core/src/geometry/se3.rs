//! Rigid transforms and the se(3) exponential / logarithm.
//!
//! Twists are ordered translation first, rotation second: `(v, ω)`. Pose
//! updates are applied on the left, `G ← exp(δξ) · G`, and every Jacobian in
//! the crate is taken with respect to that left perturbation.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Below this rotation angle the exp/log coefficients switch to Taylor series.
const SERIES_ANGLE: f64 = 1e-4;
/// Distance from π under which the log extracts the axis from the symmetric part.
const NEAR_PI: f64 = 1e-3;
/// Orthonormality drift that triggers re-projection onto SO(3) after a retraction.
const ORTHO_DRIFT: f64 = 1e-9;

/// Skew-symmetric cross-product matrix, `hat(a) * b == a × b`.
#[rustfmt::skip]
pub fn hat(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -a.z, a.y,
        a.z, 0.0, -a.x,
        -a.y, a.x, 0.0,
    )
}

/// Inverse of [`hat`]; reads the skew part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5
}

/// An element of se(3).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    /// Translational part (meters).
    pub v: Vector3<f64>,
    /// Rotational part (radians, axis * angle).
    pub w: Vector3<f64>,
}

impl Twist {
    pub fn new(v: Vector3<f64>, w: Vector3<f64>) -> Self {
        Self { v, w }
    }

    pub fn zero() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros())
    }

    pub fn from_vector(x: &Vector6<f64>) -> Self {
        Self::new(x.fixed_rows::<3>(0).into(), x.fixed_rows::<3>(3).into())
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.v.x, self.v.y, self.v.z, self.w.x, self.w.y, self.w.z)
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().chain(self.w.iter()).all(|x| x.is_finite())
    }
}

impl std::ops::Neg for Twist {
    type Output = Twist;
    fn neg(self) -> Twist {
        Twist::new(-self.v, -self.w)
    }
}

/// A rigid body transform `x ↦ R x + t`.
///
/// Serialized as a row-major 4×4 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), t)
    }

    /// Pure rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        Self::new(so3_exp(&(axis.normalize() * angle)), Vector3::zeros())
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn to_matrix4(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn to_rows(&self) -> [[f64; 4]; 4] {
        let m = self.to_matrix4();
        std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
    }

    /// Builds a transform from a row-major 4×4 matrix. The rotation block is
    /// projected back onto SO(3) when it is off by more than rounding noise;
    /// anything further than `1e-3` from a rotation is rejected.
    pub fn from_rows(rows: &[[f64; 4]; 4]) -> Result<Self> {
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite pose entry".into()));
        }
        if rows[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidArgument(format!(
                "last pose row must be [0, 0, 0, 1], got {:?}",
                rows[3]
            )));
        }
        let rotation = Matrix3::from_fn(|r, c| rows[r][c]);
        let translation = Vector3::new(rows[0][3], rows[1][3], rows[2][3]);
        let g = Self::new(rotation, translation);
        let err = g.orthonormality_error();
        if err > 1e-3 || rotation.determinant() <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "rotation block is not a rotation (orthonormality error {err:.3e})"
            )));
        }
        Ok(if err > ORTHO_DRIFT { g.orthonormalized() } else { g })
    }

    /// Max-abs entry of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        self.orthonormality_error() <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }

    /// Nearest rotation (in Frobenius norm) with the same translation.
    pub fn orthonormalized(&self) -> Self {
        let svd = self.rotation.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * vt;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * vt;
        }
        Self::new(r, self.translation)
    }

    /// Geodesic angle between the two rotations, in `[0, π]`.
    pub fn rotation_distance(&self, other: &RigidTransform) -> f64 {
        rotation_angle(&(self.rotation.transpose() * other.rotation))
    }

    pub fn translation_distance(&self, other: &RigidTransform) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// 6×6 adjoint for `(v, ω)` twists: `G exp(ξ) G⁻¹ = exp(Ad_G ξ)`.
    pub fn adjoint(&self) -> Matrix6<f64> {
        let mut ad = Matrix6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        ad.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&(hat(&self.translation) * self.rotation));
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.rotation);
        ad
    }

    pub fn approx_eq(&self, other: &RigidTransform, tol: f64) -> bool {
        (self.rotation - other.rotation).amax() <= tol && (self.translation - other.translation).amax() <= tol
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

impl<'a> Mul<&'a RigidTransform> for &'a RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: &'a RigidTransform) -> RigidTransform {
        self.compose(rhs)
    }
}

impl Serialize for RigidTransform {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = <[[f64; 4]; 4]>::deserialize(d)?;
        RigidTransform::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Rotation angle of a rotation matrix, computed with `atan2` so it stays
/// accurate near 0 and π.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let s = vee(r).norm();
    let c = 0.5 * (r.trace() - 1.0);
    s.atan2(c)
}

/// Returns `(sin θ / θ, (1 − cos θ) / θ², (θ − sin θ) / θ³)` for `θ² = theta2`.
fn exp_coefficients(theta2: f64) -> (f64, f64, f64) {
    if theta2 < SERIES_ANGLE * SERIES_ANGLE {
        (
            1.0 - theta2 / 6.0 * (1.0 - theta2 / 20.0),
            0.5 - theta2 / 24.0 * (1.0 - theta2 / 30.0),
            1.0 / 6.0 - theta2 / 120.0 * (1.0 - theta2 / 42.0),
        )
    } else {
        let theta = theta2.sqrt();
        let s = theta.sin();
        let half = (0.5 * theta).sin();
        (s / theta, 2.0 * half * half / theta2, (theta - s) / (theta2 * theta))
    }
}

/// Rodrigues' formula.
pub fn so3_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let (a, b, _) = exp_coefficients(w.norm_squared());
    let k = hat(w);
    Matrix3::identity() + k * a + k * k * b
}

/// Left Jacobian of SO(3), which is also the `V` matrix of the se(3) exponential.
pub fn so3_left_jacobian(w: &Vector3<f64>) -> Matrix3<f64> {
    let (_, b, c) = exp_coefficients(w.norm_squared());
    let k = hat(w);
    Matrix3::identity() + k * b + k * k * c
}

/// The exponential map, total on all finite twists.
pub fn se3_exp(xi: &Twist) -> RigidTransform {
    let (a, b, c) = exp_coefficients(xi.w.norm_squared());
    let k = hat(&xi.w);
    let k2 = k * k;
    let rotation = Matrix3::identity() + k * a + k2 * b;
    let v = Matrix3::identity() + k * b + k2 * c;
    RigidTransform::new(rotation, v * xi.v)
}

/// Which code path [`se3_log_with_branch`] took.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LogBranch {
    /// Rotation angle below the series threshold.
    SmallAngle,
    Generic,
    /// Rotation angle within `1e-3` of π; axis read from the symmetric part.
    NearPi,
}

/// Logarithm map, the inverse of [`se3_exp`] for rotation angles in `[0, π]`.
pub fn se3_log(g: &RigidTransform) -> Twist {
    se3_log_with_branch(g).0
}

/// [`se3_log`] that also reports which branch was used.
pub fn se3_log_with_branch(g: &RigidTransform) -> (Twist, LogBranch) {
    let r = &g.rotation;
    let s = vee(r);
    let sin_theta = s.norm();
    let cos_theta = 0.5 * (r.trace() - 1.0);
    let theta = sin_theta.atan2(cos_theta);

    let (w, branch) = if theta < SERIES_ANGLE {
        let theta2 = theta * theta;
        (
            s * (1.0 + theta2 / 6.0 + 7.0 * theta2 * theta2 / 360.0),
            LogBranch::SmallAngle,
        )
    } else if PI - theta < NEAR_PI {
        // (R + Rᵀ)/2 − cos θ I = (1 − cos θ) a aᵀ
        let sym = (r + r.transpose()) * 0.5 - Matrix3::identity() * cos_theta;
        let (i, _) = (0..3)
            .map(|i| (i, sym[(i, i)]))
            .fold((0, f64::MIN), |best, cur| if cur.1 > best.1 { cur } else { best });
        let mut axis: Vector3<f64> = sym.column(i).into();
        axis.normalize_mut();
        if axis.dot(&s) < 0.0 {
            axis = -axis;
        }
        (axis * theta, LogBranch::NearPi)
    } else {
        (s * (theta / sin_theta), LogBranch::Generic)
    };
    log::debug!("se3_log: θ = {theta:.6e}, branch {branch:?}");

    let theta2 = theta * theta;
    let d = if theta < SERIES_ANGLE {
        1.0 / 12.0 + theta2 / 720.0 + theta2 * theta2 / 30240.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half * half.cos() / half.sin()) / theta2
    };
    let k = hat(&w);
    let v_inv = Matrix3::identity() - k * 0.5 + k * k * d;
    (Twist::new(v_inv * g.translation, w), branch)
}

/// Left-multiplicative retraction `exp(δξ) · G`, re-orthonormalized if the
/// product has drifted off SO(3).
pub fn retract(g: &RigidTransform, dxi: &Twist) -> RigidTransform {
    let out = se3_exp(dxi).compose(g);
    if out.orthonormality_error() > ORTHO_DRIFT {
        out.orthonormalized()
    } else {
        out
    }
}

/// Left Jacobian of SE(3): `exp(ξ + δ) ≈ exp(J_l(ξ) δ) · exp(ξ)`.
pub fn se3_left_jacobian(xi: &Twist) -> Matrix6<f64> {
    let rho = hat(&xi.v);
    let phi = hat(&xi.w);
    let theta2 = xi.w.norm_squared();
    let (c1, c2, c3) = if theta2 < 1e-4 {
        (
            1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0,
            1.0 / 24.0 - theta2 / 720.0 + theta2 * theta2 / 40320.0,
            1.0 / 120.0 - theta2 / 2520.0 + theta2 * theta2 / 120960.0,
        )
    } else {
        let theta = theta2.sqrt();
        let (s, c) = theta.sin_cos();
        (
            (theta - s) / (theta2 * theta),
            (theta2 + 2.0 * c - 2.0) / (2.0 * theta2 * theta2),
            (2.0 * theta - 3.0 * s + theta * c) / (2.0 * theta2 * theta2 * theta),
        )
    };
    let pr = phi * rho;
    let rp = rho * phi;
    let prp = pr * phi;
    let pp = phi * phi;
    let q =
        rho * 0.5 + (pr + rp + prp) * c1 + (pp * rho + rho * pp - prp * 3.0) * c2 + (prp * phi + pp * rho * phi) * c3;
    let j = so3_left_jacobian(&xi.w);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&j);
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&q);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&j);
    out
}
