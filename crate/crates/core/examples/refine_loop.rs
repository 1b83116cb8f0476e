//! The coupled inner/outer refinement loop, comparing outer loop counts.

use bdpnp::refine::{refine_pose, OracleConfig, OracleProvider, RefinementConfig};
use bdpnp::scene::{apply_perturbation, fixed_perturbation, synthetic_scene};

fn main() -> bdpnp::Result<()> {
    let scene = synthetic_scene(3, 42);
    let start = apply_perturbation(&scene.gt_pose, &fixed_perturbation(25.0, 0.05, 3));
    let oracle = OracleConfig {
        noise_px: 1.0,
        outlier_rate: 0.1,
        ..OracleConfig::default()
    };
    for outer in [1, 2, 4] {
        let cfg = RefinementConfig {
            outer,
            inner: 12,
            ..RefinementConfig::default()
        };
        let mut provider = OracleProvider::for_scene(&scene, cfg.field_factor, oracle)?;
        let r = refine_pose(&scene, &start, &mut provider, &cfg)?;
        println!("outer {outer}:");
        for rec in r.records.iter().filter(|r| r.outer_start || r.inner + 1 == cfg.inner) {
            println!(
                "  outer {} inner {:>2}: rotation error {:.3e} rad, {} valid targets",
                rec.outer, rec.inner, rec.rotation_error, rec.valid_targets
            );
        }
    }
    Ok(())
}
