//! Deterministic synthetic scenes standing in for dataset crops.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::bundle::{make_scene, Scene};
use super::model::ObjectModel;
use crate::geometry::{Intrinsics, RigidTransform};

/// Factor between the image and the solver grid (320×240 → 80×60).
pub const FIELD_FACTOR: usize = 4;

/// 320×240 crop camera.
pub fn synthetic_camera() -> Intrinsics {
    Intrinsics::new(560.0, 560.0, 159.5, 119.5, 320, 240).expect("fixed intrinsics are valid")
}

/// A uniformly random rotation.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion<f64> {
    let mut q = [0.0f64; 4];
    for c in &mut q {
        *c = StandardNormal.sample(rng);
    }
    UnitQuaternion::new_normalize(Quaternion::new(q[0], q[1], q[2], q[3]))
}

/// A random in-frustum pose: uniform orientation, depth 0.45 to 0.6 m, and a
/// few centimeters of lateral offset.
pub fn random_object_pose<R: Rng + ?Sized>(rng: &mut R) -> RigidTransform {
    let r = random_rotation(rng).to_rotation_matrix().into_inner();
    let t = Vector3::new(
        rng.random_range(-0.02..0.02),
        rng.random_range(-0.015..0.015),
        rng.random_range(0.45..0.6),
    );
    RigidTransform::new(r, t)
}

/// Scene `index` of the suite rooted at `seed`, using the L-block model.
pub fn synthetic_scene(index: u64, seed: u64) -> Scene {
    synthetic_scene_with(ObjectModel::l_block(), index, seed)
}

/// Scene `index` of the suite rooted at `seed`. Each index draws from its
/// own stream, so suites of different sizes share their common prefix.
pub fn synthetic_scene_with(model: ObjectModel, index: u64, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let pose = random_object_pose(&mut rng);
    make_scene(model, pose, synthetic_camera()).expect("synthetic inputs are valid")
}
