//! Depth-only z-buffer rendering.

use nalgebra::{Vector2, Vector3};

use super::depth::DepthMap;
use super::model::ObjectModel;
use crate::geometry::{Intrinsics, RigidTransform, EPS_Z};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOptions {
    /// Splat radius in pixels for models without triangles.
    pub point_radius: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { point_radius: 1.0 }
    }
}

/// Renders the nearest surface depth of `model` posed at `pose` (object to
/// camera) into a `k.width × k.height` map.
pub fn render_depth(model: &ObjectModel, pose: &RigidTransform, k: &Intrinsics) -> DepthMap {
    render_depth_with(model, pose, k, &RenderOptions::default())
}

pub fn render_depth_with(model: &ObjectModel, pose: &RigidTransform, k: &Intrinsics, opts: &RenderOptions) -> DepthMap {
    let mut zbuf = vec![f64::INFINITY; k.pixel_count()];
    let cam: Vec<Vector3<f64>> = model.vertices.iter().map(|v| pose.transform_point(v)).collect();
    if model.triangles.is_empty() {
        splat_points(&cam, k, opts.point_radius, &mut zbuf);
    } else {
        for t in &model.triangles {
            let (a, b, c) = (cam[t[0]], cam[t[1]], cam[t[2]]);
            // triangles crossing the near plane are dropped, not clipped
            if a.z <= EPS_Z || b.z <= EPS_Z || c.z <= EPS_Z {
                continue;
            }
            if model.closed && (b - a).cross(&(c - a)).dot(&a) >= 0.0 {
                continue;
            }
            raster_triangle([a, b, c], k, &mut zbuf);
        }
    }
    DepthMap {
        width: k.width,
        height: k.height,
        values: zbuf.into_iter().map(|z| if z.is_finite() { z } else { 0.0 }).collect(),
    }
}

fn raster_triangle(tri: [Vector3<f64>; 3], k: &Intrinsics, zbuf: &mut [f64]) {
    let p: [Vector2<f64>; 3] = tri.map(|v| k.denormalize(v.x / v.z, v.y / v.z));
    let inv_z = tri.map(|v| 1.0 / v.z);
    let area = edge(&p[0], &p[1], &p[2]);
    if area.abs() < 1e-12 {
        return;
    }
    let min_u = p.iter().map(|q| q.x).fold(f64::INFINITY, f64::min).ceil().max(0.0);
    let max_u = p
        .iter()
        .map(|q| q.x)
        .fold(f64::NEG_INFINITY, f64::max)
        .floor()
        .min(k.width as f64 - 1.0);
    let min_v = p.iter().map(|q| q.y).fold(f64::INFINITY, f64::min).ceil().max(0.0);
    let max_v = p
        .iter()
        .map(|q| q.y)
        .fold(f64::NEG_INFINITY, f64::max)
        .floor()
        .min(k.height as f64 - 1.0);
    if min_u > max_u || min_v > max_v {
        return;
    }
    for v in min_v as usize..=max_v as usize {
        for u in min_u as usize..=max_u as usize {
            let q = Vector2::new(u as f64, v as f64);
            let l0 = edge(&p[1], &p[2], &q) / area;
            let l1 = edge(&p[2], &p[0], &q) / area;
            let l2 = edge(&p[0], &p[1], &q) / area;
            if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                continue;
            }
            // 1/Z is affine in screen space for a planar triangle
            let z = 1.0 / (l0 * inv_z[0] + l1 * inv_z[1] + l2 * inv_z[2]);
            let i = v * k.width + u;
            if z < zbuf[i] {
                zbuf[i] = z;
            }
        }
    }
}

fn edge(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn splat_points(cam: &[Vector3<f64>], k: &Intrinsics, radius: f64, zbuf: &mut [f64]) {
    let r = radius.max(0.0);
    for v in cam {
        let Some(px) = k.project_pixel(v) else { continue };
        let (u0, u1) = ((px.x - r).ceil().max(0.0), (px.x + r).floor().min(k.width as f64 - 1.0));
        let (v0, v1) = (
            (px.y - r).ceil().max(0.0),
            (px.y + r).floor().min(k.height as f64 - 1.0),
        );
        if u0 > u1 || v0 > v1 {
            continue;
        }
        for y in v0 as usize..=v1 as usize {
            for x in u0 as usize..=u1 as usize {
                let (du, dv) = (x as f64 - px.x, y as f64 - px.y);
                if du * du + dv * dv <= r * r {
                    let i = y * k.width + x;
                    zbuf[i] = zbuf[i].min(v.z);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{se3_exp, so3_exp, Twist};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k16() -> Intrinsics {
        Intrinsics::new(20.0, 20.0, 7.5, 7.5, 16, 16).unwrap()
    }

    #[test]
    fn square_at_depth_two() {
        let v = vec![
            Vector3::new(-1.0, -1.0, 2.0),
            Vector3::new(1.0, -1.0, 2.0),
            Vector3::new(1.0, 1.0, 2.0),
            Vector3::new(-1.0, 1.0, 2.0),
        ];
        let m = ObjectModel::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        let k = Intrinsics::new(10.0, 10.0, 8.0, 8.0, 17, 17).unwrap();
        let d = render_depth(&m, &RigidTransform::identity(), &k);
        assert_eq!(d.get(8, 8), 2.0);
    }

    #[test]
    fn nearer_triangle_wins() {
        let v = vec![
            Vector3::new(-1.0, -1.0, 1.0),
            Vector3::new(1.0, -1.0, 1.0),
            Vector3::new(0.0, 1.0, 1.0),
            Vector3::new(-2.0, -2.0, 2.0),
            Vector3::new(2.0, -2.0, 2.0),
            Vector3::new(0.0, 2.0, 2.0),
        ];
        let m = ObjectModel::new(v, vec![[3, 4, 5], [0, 1, 2]]).unwrap();
        let d = render_depth(&m, &RigidTransform::identity(), &k16());
        assert_eq!(d.get(7, 7), 1.0);
        assert_eq!(d.get(8, 8), 1.0);
    }

    #[test]
    fn behind_camera_renders_empty() {
        let m = ObjectModel::cuboid(0.1, 0.1, 0.1).unwrap();
        let d = render_depth(
            &m,
            &RigidTransform::from_translation(Vector3::new(0.0, 0.0, -1.0)),
            &k16(),
        );
        assert_eq!(d.valid_count(), 0);
    }

    /// Möller–Trumbore along the pixel ray; nearest hit over all triangles.
    fn ray_cast(tris: &[[Vector3<f64>; 3]], dir: &Vector3<f64>) -> Option<f64> {
        let mut best: Option<f64> = None;
        for [a, b, c] in tris {
            let (e1, e2) = (b - a, c - a);
            let pvec = dir.cross(&e2);
            let det = e1.dot(&pvec);
            if det.abs() < 1e-14 {
                continue;
            }
            let tvec = -a;
            let u = tvec.dot(&pvec) / det;
            let qvec = tvec.cross(&e1);
            let v = dir.dot(&qvec) / det;
            if u < 0.0 || v < 0.0 || u + v > 1.0 {
                continue;
            }
            let t = e2.dot(&qvec) / det;
            if t > 0.0 {
                let z = t * dir.z;
                best = Some(best.map_or(z, |b| b.min(z)));
            }
        }
        best
    }

    #[test]
    fn matches_ray_casting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let k = k16();
        for _ in 0..10 {
            let verts: Vec<Vector3<f64>> = (0..12)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(-0.4..0.4),
                        rng.random_range(-0.4..0.4),
                        rng.random_range(-0.4..0.4),
                    )
                })
                .collect();
            let tris: Vec<[usize; 3]> = (0..10)
                .map(|_| {
                    [
                        rng.random_range(0..12),
                        rng.random_range(0..12),
                        rng.random_range(0..12),
                    ]
                })
                .collect();
            let model = ObjectModel::new(verts, tris.clone()).unwrap();
            let pose = se3_exp(&Twist::new(Vector3::new(0.0, 0.0, 2.0), Vector3::new(0.3, -0.2, 0.1)));
            let d = render_depth(&model, &pose, &k);
            let cam: Vec<[Vector3<f64>; 3]> = tris
                .iter()
                .map(|t| t.map(|i| pose.transform_point(&model.vertices[i])))
                .collect();
            for v in 0..16 {
                for u in 0..16 {
                    let n = k.normalize(u as f64, v as f64);
                    let hit = ray_cast(&cam, &Vector3::new(n.x, n.y, 1.0));
                    let z = d.get(u, v);
                    if let (Some(h), true) = (hit, z > 0.0) {
                        assert!((h - z).abs() < 1e-6, "pixel ({u},{v}): raster {z} vs ray {h}");
                    }
                }
            }
        }
    }

    #[test]
    fn rendering_is_rigidly_invariant() {
        let m = ObjectModel::l_block();
        let k = Intrinsics::new(60.0, 60.0, 15.5, 11.5, 32, 24).unwrap();
        let pose = RigidTransform::new(so3_exp(&Vector3::new(0.5, -0.3, 0.8)), Vector3::new(0.01, -0.02, 0.5));
        let a = render_depth(&m, &pose, &k);
        let b = render_depth(&m.transformed(&pose), &RigidTransform::identity(), &k);
        assert!(a.valid_count() > 50);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn point_splats() {
        let m = ObjectModel::new(vec![Vector3::new(0.0, 0.0, 1.0), Vector3::new(0.0, 0.0, 3.0)], vec![]).unwrap();
        let k = Intrinsics::new(10.0, 10.0, 4.0, 4.0, 9, 9).unwrap();
        let d = render_depth_with(
            &m,
            &RigidTransform::identity(),
            &k,
            &RenderOptions { point_radius: 1.0 },
        );
        assert_eq!(d.get(4, 4), 1.0);
        assert_eq!(d.get(5, 4), 1.0);
        assert_eq!(d.valid_count(), 5);
    }
}
