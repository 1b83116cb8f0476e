//! Random pose perturbations used to start refinement away from ground truth.

use nalgebra::{Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

use crate::geometry::{so3_exp, RigidTransform, Twist};

/// Draws a perturbation twist. `w` holds a rotation vector whose axis is
/// uniform on the sphere and whose angle is `|N(0, σ_rot)|`; `v` is an
/// isotropic Gaussian translation offset with per-axis std `σ_trans`.
///
/// Negative sigmas are treated as zero.
pub fn sample_perturbation(sigma_rot_deg: f64, sigma_trans: f64, seed: u64) -> Twist {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_perturbation_with(&mut rng, sigma_rot_deg, sigma_trans)
}

pub fn sample_perturbation_with<R: Rng + ?Sized>(rng: &mut R, sigma_rot_deg: f64, sigma_trans: f64) -> Twist {
    let axis = random_axis(rng);
    let angle = (standard_normal(rng) * sigma_rot_deg.max(0.0)).abs().to_radians();
    let s = sigma_trans.max(0.0);
    let v = Vector3::new(standard_normal(rng), standard_normal(rng), standard_normal(rng)) * s;
    Twist::new(v, axis.into_inner() * angle)
}

/// A perturbation with exact rotation angle and translation norm, random
/// directions for both.
pub fn fixed_perturbation(angle_deg: f64, trans_norm: f64, seed: u64) -> Twist {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random_axis(&mut rng).into_inner() * angle_deg.to_radians();
    let v = random_axis(&mut rng).into_inner() * trans_norm;
    Twist::new(v, w)
}

/// Rotates `g` about the object origin by `p.w` (camera-frame axis) and
/// shifts its translation by `p.v`, so the two magnitudes are exactly the
/// rotation and translation errors of the result.
pub fn apply_perturbation(g: &RigidTransform, p: &Twist) -> RigidTransform {
    RigidTransform::new(so3_exp(&p.w) * g.rotation, g.translation + p.v)
}

fn random_axis<R: Rng + ?Sized>(rng: &mut R) -> Unit<Vector3<f64>> {
    let [x, y, z]: [f64; 3] = UnitSphere.sample(rng);
    Unit::new_normalize(Vector3::new(x, y, z))
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn zero_sigma_is_identity() {
        let p = sample_perturbation(0.0, 0.0, 9);
        assert_eq!(p.to_vector().amax(), 0.0);
    }

    #[test]
    fn same_seed_same_sample() {
        assert_eq!(sample_perturbation(10.0, 0.02, 3), sample_perturbation(10.0, 0.02, 3));
        assert_ne!(sample_perturbation(10.0, 0.02, 3), sample_perturbation(10.0, 0.02, 4));
    }

    #[test]
    fn mean_angle_matches_half_normal() {
        let sigma = 15.0;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| sample_perturbation_with(&mut rng, sigma, 0.0).w.norm().to_degrees())
            .sum::<f64>()
            / n as f64;
        let expect = sigma * (2.0 / PI).sqrt();
        assert!((mean - expect).abs() / expect < 0.02, "{mean} vs {expect}");
    }

    #[test]
    fn fixed_perturbation_has_exact_magnitudes() {
        let g = RigidTransform::from_translation(Vector3::new(0.0, 0.0, 0.6));
        for seed in 0..20 {
            let p = fixed_perturbation(15.0, 0.05, seed);
            let h = apply_perturbation(&g, &p);
            assert!((h.rotation_distance(&g) - 15f64.to_radians()).abs() < 1e-12);
            assert!((h.translation_distance(&g) - 0.05).abs() < 1e-12);
        }
    }
}
