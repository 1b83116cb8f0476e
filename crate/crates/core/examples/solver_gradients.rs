//! Reverse-mode gradients of the solver output, checked by finite
//! differences.

use bdpnp::scene::{apply_perturbation, fixed_perturbation};
use bdpnp::solver::{gradcheck, random_problem, solve, solver_vjp, Direction, GradcheckSpec, RandomProblemSpec};
use nalgebra::Vector6;

fn main() -> bdpnp::Result<()> {
    let (problem, truth) = random_problem(&RandomProblemSpec::default(), 3);
    let start = apply_perturbation(&truth, &fixed_perturbation(5.0, 0.02, 3));
    let (pose, trace) = solve(&problem, &start, 2)?;
    let grads = solver_vjp(&problem, &trace, &Vector6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0))?;
    let g = &grads.views[0];
    println!("two iterations: {:.1e} rad from truth", pose.rotation_distance(&truth));
    println!(
        "∂L/∂target, first pixel: {:?}",
        g.target(Direction::RenderToImage)[0].as_slice()
    );
    println!(
        "∂L/∂weight, first pixel: {:?}",
        g.weight(Direction::ImageToRender)[0].as_slice()
    );

    for gn_iters in [1, 3] {
        let spec = GradcheckSpec {
            gn_iters,
            ..GradcheckSpec::default()
        };
        let r = gradcheck(&spec, 11)?;
        println!(
            "{gn_iters} iterations: max relative error target {:.1e}, weight {:.1e}",
            r.target, r.weight
        );
    }
    Ok(())
}
