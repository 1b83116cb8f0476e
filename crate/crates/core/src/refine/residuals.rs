//! Per-pixel diagnostics handed to revision providers.

use nalgebra::Vector3;

use crate::error::Result;
use crate::geometry::{sample_bilinear, CorrespondenceField, Intrinsics, ScalarField};

/// Inverse depth carried by each correspondence minus the inverse depth the
/// target view holds at that location.
///
/// `target` is the indexed view's inverse depth on grid `k`. It is sampled
/// bilinearly at `x`; pixels whose correspondence or sample is invalid are
/// masked.
pub fn depth_residuals(target: &ScalarField, x: &CorrespondenceField, k: &Intrinsics) -> Result<ScalarField> {
    x.same_shape(k.width, k.height)?;
    x.same_shape(target.width, target.height)?;
    let mut out = ScalarField::invalid(x.width, x.height);
    for (i, px) in x.to_pixels(k).into_iter().enumerate() {
        let Some(px) = px else { continue };
        if let Some(s) = sample_bilinear(&target.values, &target.mask, target.width, target.height, px.x, px.y) {
            out.values[i] = x.points[i].z - s;
            out.mask[i] = true;
        }
    }
    Ok(out)
}

/// `x_t − x′_{t−1}` where both are valid, zero elsewhere. No previous revised
/// field (first inner iteration) gives zeros.
pub fn solver_residual_features(
    x_t: &CorrespondenceField,
    previous: Option<&CorrespondenceField>,
) -> Result<Vec<Vector3<f64>>> {
    let Some(prev) = previous else {
        return Ok(vec![Vector3::zeros(); x_t.len()]);
    };
    prev.same_shape(x_t.width, x_t.height)?;
    Ok((0..x_t.len())
        .map(|i| {
            if x_t.mask[i] && prev.mask[i] {
                x_t.points[i] - prev.points[i]
            } else {
                Vector3::zeros()
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;
    use crate::scene::DepthMap;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid() -> Intrinsics {
        Intrinsics::new(8.0, 8.0, 3.5, 2.5, 8, 6).unwrap()
    }

    fn random_depth(rng: &mut ChaCha8Rng) -> DepthMap {
        DepthMap::new(
            8,
            6,
            (0..48)
                .map(|_| {
                    if rng.random_bool(0.9) {
                        rng.random_range(0.5..2.0)
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_correspondence_gives_zero_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_depth(&mut rng);
        let x = CorrespondenceField::from_depth(&d, &grid()).unwrap();
        let r = depth_residuals(&d.inverse_depth(), &x, &grid()).unwrap();
        assert_eq!(r.mask, d.mask());
        assert!(r.values.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn offset_target_gives_constant_residual() {
        let d = DepthMap::new(8, 6, vec![1.25; 48]).unwrap();
        let x = CorrespondenceField::from_depth(&d, &grid()).unwrap();
        let mut target = d.inverse_depth();
        for v in &mut target.values {
            *v += 0.03;
        }
        let r = depth_residuals(&target, &x, &grid()).unwrap();
        assert_eq!(r.mask.iter().filter(|&&m| m).count(), 48);
        assert!(r.values.iter().all(|v| (v + 0.03).abs() < 1e-15));
    }

    #[test]
    fn random_case_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = grid();
        for _ in 0..20 {
            let target = random_depth(&mut rng).inverse_depth();
            let src = random_depth(&mut rng);
            let t = RigidTransform::new(
                crate::geometry::so3_exp(&Vector3::new(0.0, 0.0, rng.random_range(-0.1..0.1))),
                Vector3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), 0.0),
            );
            let x = CorrespondenceField::from_depth(&src, &k).unwrap().transfer(&t);
            let r = depth_residuals(&target, &x, &k).unwrap();
            for i in 0..x.len() {
                // oracle: explicit four-corner interpolation
                let want = x.mask[i].then(|| {
                    let (u, v) = (k.fx * x.points[i].x + k.cx, k.fy * x.points[i].y + k.cy);
                    let (u0, v0) = (u.floor() as i64, v.floor() as i64);
                    let (a, b) = (u - u0 as f64, v - v0 as f64);
                    let mut acc = 0.0;
                    for (du, dv, w) in [
                        (0, 0, (1.0 - a) * (1.0 - b)),
                        (1, 0, a * (1.0 - b)),
                        (0, 1, (1.0 - a) * b),
                        (1, 1, a * b),
                    ] {
                        if w == 0.0 {
                            continue;
                        }
                        let (uu, vv) = (u0 + du, v0 + dv);
                        if !(0..8).contains(&uu) || !(0..6).contains(&vv) || !target.mask[(vv * 8 + uu) as usize] {
                            return None;
                        }
                        acc += w * target.values[(vv * 8 + uu) as usize];
                    }
                    Some(x.points[i].z - acc)
                });
                match want.flatten() {
                    Some(w) => assert!(r.mask[i] && (r.values[i] - w).abs() < 1e-10),
                    None => assert!(!r.mask[i]),
                }
            }
        }
    }

    #[test]
    fn solver_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = CorrespondenceField::from_depth(&random_depth(&mut rng), &grid()).unwrap();
        assert!(solver_residual_features(&x, None)
            .unwrap()
            .iter()
            .all(|v| *v == Vector3::zeros()));
        assert!(solver_residual_features(&x, Some(&x))
            .unwrap()
            .iter()
            .all(|v| *v == Vector3::zeros()));
        let y = CorrespondenceField::from_depth(&random_depth(&mut rng), &grid()).unwrap();
        let r = solver_residual_features(&x, Some(&y)).unwrap();
        for i in 0..x.len() {
            let want = if x.mask[i] && y.mask[i] {
                x.points[i] - y.points[i]
            } else {
                Vector3::zeros()
            };
            assert_eq!(r[i], want);
        }
    }
}
