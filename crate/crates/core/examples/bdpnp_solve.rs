//! A single BD-PnP solve on a synthetic scene with oracle revisions.

use bdpnp::refine::{assemble_problem, OracleConfig, OracleProvider, RefinementConfig};
use bdpnp::scene::{apply_perturbation, fixed_perturbation, synthetic_scene};
use bdpnp::solver::solve;

fn main() -> bdpnp::Result<()> {
    let scene = synthetic_scene(0, 42);
    let start = apply_perturbation(&scene.gt_pose, &fixed_perturbation(15.0, 0.05, 1));
    let cfg = RefinementConfig::default();

    for noise in [0.0, 2.0] {
        let oracle = OracleConfig {
            noise_px: noise,
            outlier_rate: 0.2,
            outlier_weight: 0.0,
            ..OracleConfig::default()
        };
        let mut provider = OracleProvider::for_scene(&scene, cfg.field_factor, oracle)?;
        let problem = assemble_problem(&scene, &start, &mut provider, &cfg)?;
        let (pose, trace) = solve(&problem, &start, cfg.solver.iterations)?;
        println!("σ = {noise} px, {} views:", problem.views.len());
        for (k, it) in trace.iterations.iter().enumerate() {
            println!("  iter {k}: objective {:.4e}, step {:.2e}", it.objective, it.step_norm);
        }
        println!(
            "  rotation error {:.2e} rad (from {:.2e}), translation error {:.2e} m",
            pose.rotation_distance(&scene.gt_pose),
            start.rotation_distance(&scene.gt_pose),
            pose.translation_distance(&scene.gt_pose)
        );
    }
    Ok(())
}
