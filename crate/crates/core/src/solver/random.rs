//! Small random problems with a known solution, for checks and benchmarks.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::fields::ConfidenceField;
use super::problem::{BdpnpProblem, DirectionalTerm, SolverOptions, ViewPair};
use crate::geometry::{project, so3_exp, CorrespondenceField, RigidTransform};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomProblemSpec {
    /// Pixels per field.
    pub pixels: usize,
    pub views: usize,
    /// Std of the Gaussian added to every target channel.
    pub noise: f64,
    /// Weights are drawn from `[weight_lo, weight_hi]`.
    pub weight_lo: f64,
    pub weight_hi: f64,
}

impl Default for RandomProblemSpec {
    fn default() -> Self {
        Self {
            pixels: 5,
            views: 1,
            noise: 0.0,
            weight_lo: 1.0,
            weight_hi: 1.0,
        }
    }
}

/// Returns a problem whose targets are induced by a hidden image pose (plus
/// optional noise), together with that pose.
///
/// Image and render points are scattered over a small object about 1 m in
/// front of each camera; renders are rotated up to 25° around the object.
pub fn random_problem(spec: &RandomProblemSpec, seed: u64) -> (BdpnpProblem, RigidTransform) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.pixels;
    let noise = Normal::new(0.0, spec.noise.max(0.0)).expect("valid std");
    let rot = |rng: &mut ChaCha8Rng, max: f64| {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        so3_exp(&(axis.normalize() * rng.random_range(0.0..max)))
    };
    let truth = RigidTransform::new(
        rot(&mut rng, std::f64::consts::PI),
        Vector3::new(
            rng.random_range(-0.05..0.05),
            rng.random_range(-0.05..0.05),
            rng.random_range(0.9..1.1),
        ),
    );
    // object-frame surface samples
    let surface = |rng: &mut ChaCha8Rng| {
        Vector3::new(
            rng.random_range(-0.1..0.1),
            rng.random_range(-0.1..0.1),
            rng.random_range(-0.1..0.1),
        )
    };
    let field_of = |pts: &[Vector3<f64>]| {
        let points = pts.iter().map(|p| project(p).expect("in front").to_vector()).collect();
        CorrespondenceField::from_parts(n, 1, points, vec![true; n]).expect("sized")
    };
    let image_pts: Vec<_> = (0..n).map(|_| truth.transform_point(&surface(&mut rng))).collect();
    let image = field_of(&image_pts);
    let weights = |rng: &mut ChaCha8Rng| {
        let ws = (0..n)
            .map(|_| {
                Vector3::from_fn(|_, _| {
                    if spec.weight_hi > spec.weight_lo {
                        rng.random_range(spec.weight_lo..spec.weight_hi)
                    } else {
                        spec.weight_lo
                    }
                })
            })
            .collect();
        ConfidenceField::new(n, 1, ws).expect("sized")
    };
    let mut views = Vec::new();
    for _ in 0..spec.views.max(1) {
        let pose = RigidTransform::new(rot(&mut rng, 25f64.to_radians()) * truth.rotation, truth.translation);
        let render_pts: Vec<_> = (0..n).map(|_| pose.transform_point(&surface(&mut rng))).collect();
        let render = field_of(&render_pts);
        let to_image = truth * pose.inverse();
        let to_render = pose * truth.inverse();
        let noisy = |pts: &[Vector3<f64>], t: &RigidTransform, rng: &mut ChaCha8Rng| {
            let points = pts
                .iter()
                .map(|p| {
                    project(&t.transform_point(p)).expect("in front").to_vector()
                        + Vector3::from_fn(|_, _| noise.sample(rng))
                })
                .collect();
            CorrespondenceField::from_parts(n, 1, points, vec![true; n]).expect("sized")
        };
        let fwd_target = noisy(&render_pts, &to_image, &mut rng);
        let bwd_target = noisy(&image_pts, &to_render, &mut rng);
        views.push(ViewPair {
            pose,
            render,
            render_to_image: DirectionalTerm {
                target: fwd_target,
                weights: weights(&mut rng),
            },
            image_to_render: DirectionalTerm {
                target: bwd_target,
                weights: weights(&mut rng),
            },
        });
    }
    let p = BdpnpProblem::new(image, views, SolverOptions::default()).expect("consistent shapes");
    (p, truth)
}
