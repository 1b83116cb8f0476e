//! MSSD, MSPD and VSD with symmetries, and the recall summary.

use bdpnp::geometry::RigidTransform;
use bdpnp::metrics::{evaluate_object, mspd, mssd, summarize, EvalConfig};
use bdpnp::scene::{
    apply_perturbation, fixed_perturbation, make_scene, synthetic_camera, synthetic_scene_with, ObjectModel,
};
use nalgebra::Vector3;

fn main() -> bdpnp::Result<()> {
    // a box is unchanged by half turns about its axes
    let half_turn = |axis| RigidTransform::from_axis_angle(&axis, std::f64::consts::PI);
    let model = ObjectModel::cuboid(0.12, 0.06, 0.04)?.with_symmetries(vec![
        RigidTransform::identity(),
        half_turn(Vector3::x()),
        half_turn(Vector3::y()),
        half_turn(Vector3::z()),
    ])?;
    let scene = synthetic_scene_with(model.clone(), 0, 1);
    let flipped = scene.gt_pose * half_turn(Vector3::z());
    println!(
        "half turn about z: MSSD {:.1e} m",
        mssd(&flipped, &scene.gt_pose, &model)
    );

    let plain = make_scene(
        ObjectModel::cuboid(0.12, 0.06, 0.04)?,
        scene.gt_pose,
        synthetic_camera(),
    )?;
    println!(
        "same pose without symmetries: MSSD {:.3} m",
        mssd(&flipped, &plain.gt_pose, &plain.model)
    );

    let cfg = EvalConfig::default();
    let mut evals = Vec::new();
    for (i, deg) in [0.0, 2.0, 10.0, 40.0].into_iter().enumerate() {
        let pred = apply_perturbation(&scene.gt_pose, &fixed_perturbation(deg, 0.005, i as u64));
        println!(
            "{deg:>4}°: MSSD {:.4} m, MSPD {:.2} px",
            mssd(&pred, &scene.gt_pose, &model),
            mspd(&pred, &scene.gt_pose, &model, &scene.intrinsics)?
        );
        evals.push(evaluate_object(
            i,
            0,
            &pred,
            &scene.gt_pose,
            &model,
            &scene.intrinsics,
            &scene.depth,
            &cfg,
        )?);
    }
    let s = summarize(&evals)?;
    println!(
        "recall: Avg {:.3}, MSPD {:.3}, VSD {:.3}, MSSD {:.3}",
        s.avg, s.mspd, s.vsd, s.mssd
    );
    Ok(())
}
