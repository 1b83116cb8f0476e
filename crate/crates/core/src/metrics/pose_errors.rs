//! Symmetry-aware surface, projection and visible-surface discrepancies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, RigidTransform, EPS_Z};
use crate::scene::{DepthMap, ObjectModel};

/// Default visibility tolerance, 15 mm.
pub const DEFAULT_DELTA_VIS: f64 = 0.015;

/// `min_S max_x ‖P̂x − P̄Sx‖`, in the model's length unit.
pub fn mssd(p_hat: &RigidTransform, p_bar: &RigidTransform, model: &ObjectModel) -> f64 {
    model
        .symmetries
        .iter()
        .map(|s| {
            let ps = p_bar * s;
            model
                .vertices
                .iter()
                .map(|x| (p_hat.transform_point(x) - ps.transform_point(x)).norm())
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

/// `min_S max_x ‖proj(P̂x) − proj(P̄Sx)‖` in pixels of `k`.
///
/// Undefined when any vertex is at or behind the camera under either pose.
pub fn mspd(p_hat: &RigidTransform, p_bar: &RigidTransform, model: &ObjectModel, k: &Intrinsics) -> Result<f64> {
    let proj = |g: &RigidTransform, x| {
        let p = g.transform_point(x);
        if p.z <= EPS_Z {
            return Err(Error::MetricUndefined(format!(
                "vertex behind the camera (Z = {:.3e})",
                p.z
            )));
        }
        Ok(k.project_pixel(&p).expect("Z checked"))
    };
    let projected: Vec<_> = model.vertices.iter().map(|x| proj(p_hat, x)).collect::<Result<_>>()?;
    let mut best = f64::INFINITY;
    for s in &model.symmetries {
        let ps = p_bar * s;
        let mut worst: f64 = 0.0;
        for (x, a) in model.vertices.iter().zip(&projected) {
            worst = worst.max((a - proj(&ps, x)?).norm());
        }
        best = best.min(worst);
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VsdOutcome {
    /// In `[0, 1]`; 0 when the union of visible pixels is empty.
    pub value: f64,
    /// No pixel was visible in either render.
    pub empty_union: bool,
}

/// Rendered pixels whose depth is at most `δ_vis` behind the sensor, or
/// where the sensor has no reading.
pub fn visibility_mask(render: &DepthMap, sensor: &DepthMap, delta_vis: f64) -> Vec<bool> {
    render
        .values
        .iter()
        .zip(&sensor.values)
        .map(|(&d, &s)| d > 0.0 && (s <= 0.0 || d - s <= delta_vis))
        .collect()
}

/// Visible surface discrepancy between renders at the predicted and true
/// pose, judged against the sensor depth.
pub fn vsd(d_hat: &DepthMap, d_bar: &DepthMap, sensor: &DepthMap, tau: f64, delta_vis: f64) -> Result<VsdOutcome> {
    for m in [d_bar, sensor] {
        if (m.width, m.height) != (d_hat.width, d_hat.height) {
            return Err(Error::shape(
                format!("{}×{}", d_hat.width, d_hat.height),
                format!("{}×{}", m.width, m.height),
            ));
        }
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("τ must be positive, got {tau}")));
    }
    let v_hat = visibility_mask(d_hat, sensor, delta_vis);
    let v_bar = visibility_mask(d_bar, sensor, delta_vis);
    let mut union = 0usize;
    let mut bad = 0usize;
    for i in 0..v_hat.len() {
        if !(v_hat[i] || v_bar[i]) {
            continue;
        }
        union += 1;
        let ok = v_hat[i] && v_bar[i] && (d_hat.values[i] - d_bar.values[i]).abs() < tau;
        if !ok {
            bad += 1;
        }
    }
    if union == 0 {
        log::debug!("VSD: empty visibility union, reported as 0");
        return Ok(VsdOutcome {
            value: 0.0,
            empty_union: true,
        });
    }
    Ok(VsdOutcome {
        value: bad as f64 / union as f64,
        empty_union: false,
    })
}

/// Weighting of the pose loss: `θ + translation_weight·‖Δt‖₁`.
pub const DEFAULT_TRANSLATION_WEIGHT: f64 = 1.0;

/// Minimum over symmetries of the geodesic rotation angle plus the weighted
/// L1 translation distance between `g` and `g_true·S`.
pub fn pose_loss(
    g: &RigidTransform,
    g_true: &RigidTransform,
    symmetries: &[RigidTransform],
    translation_weight: f64,
) -> f64 {
    let id = [RigidTransform::identity()];
    let syms = if symmetries.is_empty() { &id[..] } else { symmetries };
    syms.iter()
        .map(|s| {
            let t = g_true * s;
            g.rotation_distance(&t) + translation_weight * (g.translation - t.translation).abs().sum()
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{se3_exp, so3_exp, Twist};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pose(rng: &mut ChaCha8Rng) -> RigidTransform {
        let w = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        RigidTransform::new(
            so3_exp(&w),
            Vector3::new(
                rng.random_range(-0.05..0.05),
                rng.random_range(-0.05..0.05),
                rng.random_range(0.5..0.8),
            ),
        )
    }

    fn z_flip() -> RigidTransform {
        RigidTransform::new(so3_exp(&Vector3::new(0.0, 0.0, std::f64::consts::PI)), Vector3::zeros())
    }

    fn camera() -> Intrinsics {
        Intrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn mssd_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = ObjectModel::l_block();
        let g = pose(&mut rng);
        assert_eq!(mssd(&g, &g, &m), 0.0);
        let t = Vector3::new(0.003, -0.004, 0.012);
        let shifted = RigidTransform::new(g.rotation, g.translation + t);
        assert!((mssd(&shifted, &g, &m) - t.norm()).abs() < 1e-15);
        // scaling a translation error scales the metric
        let shifted3 = RigidTransform::new(g.rotation, g.translation + 3.0 * t);
        assert!((mssd(&shifted3, &g, &m) - 3.0 * mssd(&shifted, &g, &m)).abs() < 1e-15);
    }

    #[test]
    fn symmetry_absorbs_the_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = ObjectModel::cuboid(0.04, 0.03, 0.02)
            .unwrap()
            .with_symmetries(vec![z_flip()])
            .unwrap();
        let g = pose(&mut rng);
        let flipped = g * z_flip();
        assert!(mssd(&flipped, &g, &m) < 1e-12);
        assert!(mspd(&flipped, &g, &m, &camera()).unwrap() < 1e-9);
        assert!(pose_loss(&flipped, &g, &m.symmetries, 1.0) < 1e-7);
        let plain = ObjectModel::cuboid(0.04, 0.03, 0.02).unwrap();
        assert!(mssd(&flipped, &g, &plain) > 0.01);
    }

    #[test]
    fn metrics_match_per_vertex_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = camera();
        for _ in 0..50 {
            let m = ObjectModel::l_block().with_symmetries(vec![z_flip()]).unwrap();
            let (a, b) = (pose(&mut rng), pose(&mut rng));
            let mut want_s = f64::INFINITY;
            let mut want_p = f64::INFINITY;
            for s in &m.symmetries {
                let bs = b * *s;
                let mut ws: f64 = 0.0;
                let mut wp: f64 = 0.0;
                for x in &m.vertices {
                    let pa = a.rotation * x + a.translation;
                    let pb = bs.rotation * x + bs.translation;
                    let d = pa - pb;
                    ws = ws.max((d.x * d.x + d.y * d.y + d.z * d.z).sqrt());
                    // pinhole through the inverse depth d = 1/Z
                    let (da, db) = (1.0 / pa.z, 1.0 / pb.z);
                    let ua = (k.fx * (pa.x * da) + k.cx, k.fy * (pa.y * da) + k.cy);
                    let ub = (k.fx * (pb.x * db) + k.cx, k.fy * (pb.y * db) + k.cy);
                    let (du, dv) = (ua.0 - ub.0, ua.1 - ub.1);
                    wp = wp.max((du * du + dv * dv).sqrt());
                }
                want_s = want_s.min(ws);
                want_p = want_p.min(wp);
            }
            assert_eq!(mssd(&a, &b, &m), want_s);
            assert_eq!(mspd(&a, &b, &m, &k).unwrap(), want_p);
            // symmetric in its arguments without symmetries
            let plain = ObjectModel::l_block();
            assert!((mssd(&a, &b, &plain) - mssd(&b, &a, &plain)).abs() < 1e-15);
            assert!((mspd(&a, &b, &plain, &k).unwrap() - mspd(&b, &a, &plain, &k).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn in_plane_rotation_moves_projections_along_chords() {
        let k = camera();
        let m = ObjectModel::l_block();
        let g = RigidTransform::new(so3_exp(&Vector3::new(0.3, 0.2, 0.0)), Vector3::new(0.0, 0.0, 0.6));
        let theta = 0.2;
        let rz = RigidTransform::new(so3_exp(&Vector3::new(0.0, 0.0, theta)), Vector3::zeros());
        let want = m
            .vertices
            .iter()
            .map(|x| {
                let p = k.project_pixel(&g.transform_point(x)).unwrap() - nalgebra::Vector2::new(k.cx, k.cy);
                // fx = fy: rotation about the principal point by θ
                2.0 * p.norm() * (theta / 2.0).sin()
            })
            .fold(0.0, f64::max);
        assert!((mspd(&(rz * g), &g, &m, &k).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn mspd_behind_camera_is_undefined() {
        let m = ObjectModel::l_block();
        let g = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 0.5));
        let behind = RigidTransform::from_translation(Vector3::new(0.0, 0.0, -0.5));
        assert!(matches!(
            mspd(&behind, &g, &m, &camera()),
            Err(Error::MetricUndefined(_))
        ));
    }

    fn depth(rng: &mut ChaCha8Rng, w: usize, h: usize, fill: f64) -> DepthMap {
        DepthMap::new(
            w,
            h,
            (0..w * h)
                .map(|_| {
                    if rng.random_bool(fill) {
                        rng.random_range(0.5..0.6)
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn vsd_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = depth(&mut rng, 6, 5, 0.7);
        let sensor = depth(&mut rng, 6, 5, 0.9);
        assert_eq!(vsd(&d, &d, &sensor, 0.01, DEFAULT_DELTA_VIS).unwrap().value, 0.0);
        // disjoint supports, no sensor
        let a = DepthMap::new(2, 1, vec![0.5, 0.0]).unwrap();
        let b = DepthMap::new(2, 1, vec![0.0, 0.5]).unwrap();
        let none = DepthMap::new(2, 1, vec![0.0, 0.0]).unwrap();
        assert_eq!(vsd(&a, &b, &none, 0.05, DEFAULT_DELTA_VIS).unwrap().value, 1.0);
        let e = vsd(&none, &none, &none, 0.05, DEFAULT_DELTA_VIS).unwrap();
        assert!(e.empty_union && e.value == 0.0);
        assert!(vsd(&a, &d, &none, 0.05, DEFAULT_DELTA_VIS).is_err());
    }

    #[test]
    fn vsd_matches_a_per_pixel_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (w, h) = (rng.random_range(2..9), rng.random_range(2..9));
            let a = depth(&mut rng, w, h, 0.6);
            let b = depth(&mut rng, w, h, 0.6);
            let s = depth(&mut rng, w, h, 0.8);
            let tau = rng.random_range(0.005..0.08);
            let (mut num, mut den) = (0, 0);
            for i in 0..w * h {
                let va = a.values[i] > 0.0 && (s.values[i] == 0.0 || a.values[i] - s.values[i] <= 0.015);
                let vb = b.values[i] > 0.0 && (s.values[i] == 0.0 || b.values[i] - s.values[i] <= 0.015);
                if va || vb {
                    den += 1;
                    if !(va && vb && (a.values[i] - b.values[i]).abs() < tau) {
                        num += 1;
                    }
                }
            }
            let want = if den == 0 { 0.0 } else { num as f64 / den as f64 };
            let got = vsd(&a, &b, &s, tau, 0.015).unwrap().value;
            assert_eq!(got, want);
            assert!((0.0..=1.0).contains(&got));
        }
    }

    #[test]
    fn pose_loss_terms() {
        let g = se3_exp(&Twist::new(Vector3::new(0.1, 0.0, 0.5), Vector3::new(0.2, 0.1, -0.3)));
        assert_eq!(pose_loss(&g, &g, &[], 1.0), 0.0);
        let r30 = RigidTransform::new(
            so3_exp(&Vector3::new(0.0, std::f64::consts::FRAC_PI_6, 0.0)),
            Vector3::zeros(),
        );
        let rotated = RigidTransform::new(g.rotation * r30.rotation, g.translation);
        assert!(
            (pose_loss(&rotated, &g, &[RigidTransform::identity()], 1.0) - std::f64::consts::FRAC_PI_6).abs() < 1e-12
        );
        let moved = RigidTransform::new(g.rotation, g.translation + Vector3::new(0.01, -0.02, 0.03));
        assert!((pose_loss(&moved, &g, &[], 2.0) - 0.12).abs() < 1e-12);
    }
}
