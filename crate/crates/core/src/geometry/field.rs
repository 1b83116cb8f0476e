//! Dense per-pixel fields on the solver grid.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::camera::{backproject, project, AugmentedPoint, Intrinsics, EPS_D};
use super::se3::RigidTransform;
use crate::error::{Error, Result};
use crate::scene::DepthMap;

/// Per-pixel augmented points `(x, y, d)` in normalized coordinates of some
/// target view, plus a validity mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceField {
    pub width: usize,
    pub height: usize,
    pub points: Vec<Vector3<f64>>,
    pub mask: Vec<bool>,
}

impl CorrespondenceField {
    /// A field with every pixel masked out.
    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            points: vec![Vector3::zeros(); width * height],
            mask: vec![false; width * height],
        }
    }

    pub fn from_parts(width: usize, height: usize, points: Vec<Vector3<f64>>, mask: Vec<bool>) -> Result<Self> {
        let n = width * height;
        if points.len() != n || mask.len() != n {
            return Err(Error::shape(
                format!("{n} entries ({width}×{height})"),
                format!("{} points / {} mask entries", points.len(), mask.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            points,
            mask,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<AugmentedPoint> {
        self.mask[i].then(|| AugmentedPoint::from_vector(&self.points[i]))
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn same_shape(&self, other_w: usize, other_h: usize) -> Result<()> {
        if self.width != other_w || self.height != other_h {
            return Err(Error::shape(
                format!("{}×{}", self.width, self.height),
                format!("{other_w}×{other_h}"),
            ));
        }
        Ok(())
    }

    /// Points `(x, y, 1/Z)` of each pixel of a depth map, in that map's own
    /// normalized coordinates.
    pub fn from_depth(depth: &DepthMap, k: &Intrinsics) -> Result<Self> {
        depth.check_shape(k)?;
        let mut field = Self::invalid(depth.width, depth.height);
        for v in 0..depth.height {
            for u in 0..depth.width {
                let i = v * depth.width + u;
                let z = depth.values[i];
                if z > 0.0 && 1.0 / z > EPS_D {
                    let n = k.normalize(u as f64, v as f64);
                    field.points[i] = Vector3::new(n.x, n.y, 1.0 / z);
                    field.mask[i] = true;
                }
            }
        }
        Ok(field)
    }

    /// Maps every valid point through `Π(T · Π⁻¹(x))`. Points that end up
    /// behind the target camera are masked.
    pub fn transfer(&self, t: &RigidTransform) -> Self {
        let mut out = Self::invalid(self.width, self.height);
        for i in 0..self.len() {
            let Some(a) = self.get(i) else { continue };
            let Some(p) = backproject(&a) else { continue };
            if let Some(q) = project(&t.transform_point(&p)) {
                out.points[i] = q.to_vector();
                out.mask[i] = true;
            }
        }
        out
    }

    /// The inverse-depth channel as a masked scalar field.
    pub fn inverse_depth(&self) -> ScalarField {
        ScalarField {
            width: self.width,
            height: self.height,
            values: self.points.iter().map(|p| p.z).collect(),
            mask: self.mask.clone(),
        }
    }

    /// Pixel coordinates of every valid point under `k`.
    pub fn to_pixels(&self, k: &Intrinsics) -> Vec<Option<Vector2<f64>>> {
        self.points
            .iter()
            .zip(&self.mask)
            .map(|(p, &m)| m.then(|| k.denormalize(p.x, p.y)))
            .collect()
    }
}

/// `x' = Π(G_dst · G_src⁻¹ · Π⁻¹(x))` for every pixel of `depth_src`.
pub fn induce_correspondence(
    g_src: &RigidTransform,
    g_dst: &RigidTransform,
    depth_src: &DepthMap,
    k: &Intrinsics,
) -> Result<CorrespondenceField> {
    Ok(CorrespondenceField::from_depth(depth_src, k)?.transfer(&(g_dst * &g_src.inverse())))
}

/// A masked scalar per pixel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl ScalarField {
    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
            mask: vec![false; width * height],
        }
    }
}

/// Bilinear sample of a masked grid at pixel coordinates `(u, v)`.
///
/// Every corner with a nonzero interpolation weight must be inside the grid
/// and valid, otherwise the sample is `None`.
pub fn sample_bilinear(values: &[f64], mask: &[bool], width: usize, height: usize, u: f64, v: f64) -> Option<f64> {
    if !(u.is_finite() && v.is_finite()) {
        return None;
    }
    let u0 = u.floor();
    let v0 = v.floor();
    let fu = u - u0;
    let fv = v - v0;
    let mut acc = 0.0;
    for (dv, wv) in [(0, 1.0 - fv), (1, fv)] {
        for (du, wu) in [(0, 1.0 - fu), (1, fu)] {
            let w = wu * wv;
            if w == 0.0 {
                continue;
            }
            let (x, y) = (u0 as i64 + du, v0 as i64 + dv);
            if x < 0 || y < 0 || x >= width as i64 || y >= height as i64 {
                return None;
            }
            let i = y as usize * width + x as usize;
            if !mask[i] {
                return None;
            }
            acc += w * values[i];
        }
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::se3::{se3_exp, Twist};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_depth(rng: &mut ChaCha8Rng, w: usize, h: usize) -> DepthMap {
        let values = (0..w * h)
            .map(|_| {
                if rng.random_bool(0.85) {
                    rng.random_range(0.5..2.0)
                } else {
                    0.0
                }
            })
            .collect();
        DepthMap::new(w, h, values).unwrap()
    }

    fn camera() -> Intrinsics {
        Intrinsics::new(5.0, 5.5, 1.7, 1.4, 4, 4).unwrap()
    }

    #[test]
    fn same_pose_gives_identity_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let depth = random_depth(&mut rng, 4, 4);
        let k = camera();
        let g = se3_exp(&Twist::new(Vector3::new(0.1, 0.0, 0.4), Vector3::new(0.2, 0.1, 0.0)));
        let f = induce_correspondence(&g, &g, &depth, &k).unwrap();
        let grid = CorrespondenceField::from_depth(&depth, &k).unwrap();
        assert_eq!(f.mask, grid.mask);
        for i in 0..f.len() {
            assert!((f.points[i] - grid.points[i]).amax() < 1e-14);
        }
    }

    #[test]
    fn halving_depth_doubles_coordinates() {
        let depth = DepthMap::new(4, 4, vec![2.0; 16]).unwrap();
        let k = camera();
        let src = RigidTransform::identity();
        let dst = RigidTransform::from_translation(Vector3::new(0.0, 0.0, -1.0));
        let f = induce_correspondence(&src, &dst, &depth, &k).unwrap();
        let grid = CorrespondenceField::from_depth(&depth, &k).unwrap();
        for i in 0..16 {
            let (a, b) = (f.points[i], grid.points[i]);
            assert!((a.x - 2.0 * b.x).abs() < 1e-15);
            assert!((a.y - 2.0 * b.y).abs() < 1e-15);
            assert!((a.z - 2.0 * b.z).abs() < 1e-15);
        }
    }

    #[test]
    fn matches_per_pixel_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = camera();
        for _ in 0..20 {
            let depth = random_depth(&mut rng, 4, 4);
            let mut tw = || {
                Twist::new(
                    Vector3::new(
                        rng.random_range(-0.1..0.1),
                        rng.random_range(-0.1..0.1),
                        rng.random_range(-0.1..0.1),
                    ),
                    Vector3::new(
                        rng.random_range(-0.2..0.2),
                        rng.random_range(-0.2..0.2),
                        rng.random_range(-0.2..0.2),
                    ),
                )
            };
            let (a, b) = (se3_exp(&tw()), se3_exp(&tw()));
            let f = induce_correspondence(&a, &b, &depth, &k).unwrap();
            // scalar re-implementation: pixel → ray → world → other camera
            let m = b.to_matrix4() * a.to_matrix4().try_inverse().unwrap();
            for v in 0..4 {
                for u in 0..4 {
                    let i = v * 4 + u;
                    let z = depth.values[i];
                    if z <= 0.0 {
                        assert!(!f.mask[i]);
                        continue;
                    }
                    let xs = (u as f64 - k.cx) / k.fx * z;
                    let ys = (v as f64 - k.cy) / k.fy * z;
                    let p = m * nalgebra::Vector4::new(xs, ys, z, 1.0);
                    let expect = Vector3::new(p.x / p.z, p.y / p.z, 1.0 / p.z);
                    assert!(f.mask[i]);
                    assert!((f.points[i] - expect).amax() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn composition_returns_to_source_pixels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let depth = random_depth(&mut rng, 6, 5);
        let k = Intrinsics::new(6.0, 6.0, 2.5, 2.0, 6, 5).unwrap();
        let a = se3_exp(&Twist::new(Vector3::new(0.0, 0.1, 0.0), Vector3::new(0.1, 0.0, 0.05)));
        let b = se3_exp(&Twist::new(Vector3::new(0.05, 0.0, 0.1), Vector3::new(0.0, -0.1, 0.1)));
        let grid = CorrespondenceField::from_depth(&depth, &k).unwrap();
        let there = grid.transfer(&(b * a.inverse()));
        let back = there.transfer(&(a * b.inverse()));
        for i in 0..grid.len() {
            if grid.mask[i] && back.mask[i] {
                assert!((back.points[i] - grid.points[i]).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn behind_camera_is_masked() {
        let depth = DepthMap::new(4, 4, vec![1.0; 16]).unwrap();
        let f = induce_correspondence(
            &RigidTransform::identity(),
            &RigidTransform::from_translation(Vector3::new(0.0, 0.0, -2.0)),
            &depth,
            &camera(),
        )
        .unwrap();
        assert_eq!(f.valid_count(), 0);
    }

    #[test]
    fn bilinear_midpoint_and_masking() {
        let values = vec![1.0, 3.0, 5.0, 7.0];
        let mask = vec![true, true, true, false];
        assert_eq!(sample_bilinear(&values, &mask, 2, 2, 0.5, 0.0), Some(2.0));
        assert_eq!(sample_bilinear(&values, &mask, 2, 2, 0.0, 1.0), Some(5.0));
        assert_eq!(sample_bilinear(&values, &mask, 2, 2, 0.5, 0.5), None);
        assert_eq!(sample_bilinear(&values, &mask, 2, 2, -0.5, 0.0), None);
    }
}
