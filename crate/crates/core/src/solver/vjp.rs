//! Reverse-mode derivative of an unrolled solve with respect to the revised
//! targets and the confidence weights.
//!
//! Each iteration is `G_{t+1} = exp(δ_t) G_t` with `δ_t = A_t⁻¹ g_t`. Going
//! backwards with `ε̄` the gradient for a left perturbation of the pose:
//!
//! ```text
//! δ̄      = J_l(δ_t)ᵀ ε̄_{t+1}
//! ε̄_t    = Ad(exp δ_t)ᵀ ε̄_{t+1} + (∂δ_t/∂ε_t)ᵀ δ̄
//! u      = A_t⁻¹ δ̄
//! ∂L/∂x′ += w (J·u)
//! ∂L/∂w  += (J·u) e − (J·u)(J·δ) − λ Σ_k u_k J_k² δ_k
//! ```
//!
//! `∂δ_t/∂ε_t` comes from re-running the linearization with dual numbers.
//! Revisions enter only through `x′ = x + r`, so their gradient equals the
//! target gradient.

use nalgebra::{Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::dual::{solve_spd, Dual6};
use super::fields::{effective_weight, W_MAX};
use super::gauss_newton::SolveTrace;
use super::linearize::{damped, for_each_row, normal_equations, prepare, PoseT};
use super::problem::{BdpnpProblem, Direction};
use crate::error::{Error, Result};
use crate::geometry::{se3_exp, se3_left_jacobian};

/// Gradients for one view pair, per pixel and channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewGradients {
    pub render_to_image_target: Vec<Vector3<f64>>,
    pub render_to_image_weight: Vec<Vector3<f64>>,
    pub image_to_render_target: Vec<Vector3<f64>>,
    pub image_to_render_weight: Vec<Vector3<f64>>,
}

impl ViewGradients {
    fn zeros(n: usize) -> Self {
        Self {
            render_to_image_target: vec![Vector3::zeros(); n],
            render_to_image_weight: vec![Vector3::zeros(); n],
            image_to_render_target: vec![Vector3::zeros(); n],
            image_to_render_weight: vec![Vector3::zeros(); n],
        }
    }

    pub fn target(&self, dir: Direction) -> &[Vector3<f64>] {
        match dir {
            Direction::RenderToImage => &self.render_to_image_target,
            Direction::ImageToRender => &self.image_to_render_target,
        }
    }

    pub fn weight(&self, dir: Direction) -> &[Vector3<f64>] {
        match dir {
            Direction::RenderToImage => &self.render_to_image_weight,
            Direction::ImageToRender => &self.image_to_render_weight,
        }
    }

    fn parts_mut(&mut self, dir: Direction) -> (&mut Vec<Vector3<f64>>, &mut Vec<Vector3<f64>>) {
        match dir {
            Direction::RenderToImage => (&mut self.render_to_image_target, &mut self.render_to_image_weight),
            Direction::ImageToRender => (&mut self.image_to_render_target, &mut self.image_to_render_weight),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverGradients {
    pub views: Vec<ViewGradients>,
    /// Gradient with respect to a left perturbation of the starting pose.
    pub initial_pose: Vector6<f64>,
}

impl SolverGradients {
    /// Revisions enter as `x′ = x + r`, so `∂L/∂r = ∂L/∂x′`.
    pub fn revision(&self, view: usize, dir: Direction) -> &[Vector3<f64>] {
        self.views[view].target(dir)
    }

    pub fn max_abs(&self) -> f64 {
        self.views
            .iter()
            .flat_map(|v| {
                [
                    &v.render_to_image_target,
                    &v.render_to_image_weight,
                    &v.image_to_render_target,
                    &v.image_to_render_weight,
                ]
            })
            .flat_map(|f| f.iter())
            .map(|g| g.amax())
            .fold(0.0, f64::max)
    }
}

/// Backpropagates `upstream`, the gradient with respect to a left
/// perturbation `exp(ε)·G` of the solved pose, through every recorded
/// iteration of `trace`.
pub fn solver_vjp(p: &BdpnpProblem, trace: &SolveTrace, upstream: &Vector6<f64>) -> Result<SolverGradients> {
    p.validate()?;
    if trace.is_empty() {
        return Err(Error::MissingTrace("the solve recorded no iterations".into()));
    }
    let prep = prepare(p);
    let n = p.image.len();
    let mut grads = SolverGradients {
        views: (0..p.views.len()).map(|_| ViewGradients::zeros(n)).collect(),
        initial_pose: Vector6::zeros(),
    };
    let mut eps_bar = *upstream;
    for rec in trace.iterations.iter().rev() {
        if !rec.accepted || rec.rank_deficient {
            // the pose passed through unchanged and the step did not depend on inputs
            continue;
        }
        let delta = rec.step.to_vector();
        let lambda = rec.damping;
        let delta_bar = se3_left_jacobian(&rec.step).transpose() * eps_bar;
        let carried = se3_exp(&rec.step).adjoint().transpose() * eps_bar;

        // ∂δ/∂ε at fixed λ, by dual numbers
        let (hd, gd, _) = normal_equations(&prep, &PoseT::<Dual6>::perturbed(&rec.linearized_at));
        let dd = solve_spd(&damped(&hd, lambda), &gd)
            .ok_or_else(|| Error::MissingTrace("recorded step is not reproducible: singular system".into()))?;
        let m = Matrix6::from_fn(|i, j| dd[i].du[j]);
        eps_bar = carried + m.transpose() * delta_bar;

        let (h, _, _) = normal_equations(&prep, &PoseT::from_rigid(&rec.linearized_at));
        let a = damped(&h, lambda);
        let u = solve_spd(&a, &std::array::from_fn(|i| delta_bar[i]))
            .ok_or_else(|| Error::MissingTrace("recorded step is not reproducible: singular system".into()))?;

        for_each_row(
            &prep,
            &PoseT::from_rigid(&rec.linearized_at),
            |ti, ri, c, j, pi, w_raw| {
                if !(0.0..=W_MAX).contains(&w_raw) {
                    return;
                }
                let w = effective_weight(w_raw);
                let term = &prep.terms[ti];
                let row = &term.rows[ri];
                let e = row.target[c] - pi;
                let ju: f64 = (0..6).map(|k| j[k] * u[k]).sum();
                let jd: f64 = (0..6).map(|k| j[k] * delta[k]).sum();
                let diag: f64 = (0..6).map(|k| u[k] * j[k] * j[k] * delta[k]).sum();
                let (tg, wg) = grads.views[term.view].parts_mut(term.dir);
                tg[row.pixel][c] += w * ju;
                wg[row.pixel][c] += ju * e - ju * jd - lambda * diag;
            },
        );
    }
    grads.initial_pose = eps_bar;
    Ok(grads)
}
