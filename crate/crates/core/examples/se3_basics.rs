//! Exponential and logarithm maps, left retraction and pose distances.

use bdpnp::geometry::{retract, se3_exp, se3_log, RigidTransform, Twist};
use nalgebra::Vector3;

fn main() {
    let xi = Twist::new(Vector3::new(0.1, -0.05, 0.3), Vector3::new(0.2, 0.4, -0.1));
    let g = se3_exp(&xi);
    println!("exp(ξ) =\n{}", g.to_matrix4());
    println!("log(exp(ξ)) = {:?}", se3_log(&g).to_vector().as_slice());

    // a small update applied on the left
    let delta = Twist::new(Vector3::new(0.0, 0.0, 0.01), Vector3::new(0.0, 0.02, 0.0));
    let h = retract(&g, &delta);
    println!(
        "rotation moved {:.4} rad, translation {:.4} m",
        h.rotation_distance(&g),
        h.translation_distance(&g)
    );

    let p = Vector3::new(0.05, 0.02, 0.5);
    let back = g.inverse().transform_point(&g.transform_point(&p));
    println!("round trip through G and G⁻¹: {:.1e}", (back - p).norm());
    assert!((g * g.inverse()).translation_distance(&RigidTransform::identity()) < 1e-12);
}
