//! Refinement without sensor depth: the image side is a render at the
//! current pose and depth updates are either discarded or applied.

use bdpnp::refine::{refine_pose, InputMode, OracleConfig, OracleProvider, RefinementConfig};
use bdpnp::scene::{apply_perturbation, fixed_perturbation, synthetic_scene};
use bdpnp::solver::DepthPolicy;

fn main() -> bdpnp::Result<()> {
    let oracle = OracleConfig {
        noise_px: 1.0,
        ..OracleConfig::default()
    };
    for policy in [DepthPolicy::Discard, DepthPolicy::Apply] {
        let cfg = RefinementConfig {
            mode: InputMode::Rgb,
            depth_policy: policy,
            inner: 10,
            ..RefinementConfig::default()
        };
        let mut errors = Vec::new();
        for i in 0..4 {
            let scene = synthetic_scene(i, 5);
            let start = apply_perturbation(&scene.gt_pose, &fixed_perturbation(15.0, 0.05, i));
            let mut provider = OracleProvider::for_scene(&scene, cfg.field_factor, oracle)?;
            let r = refine_pose(&scene, &start, &mut provider, &cfg)?;
            errors.push(r.pose.rotation_distance(&scene.gt_pose));
        }
        let shown: Vec<String> = errors.iter().map(|e| format!("{e:.2e}")).collect();
        println!("{policy:?}: rotation errors {}", shown.join(", "));
    }
    Ok(())
}
