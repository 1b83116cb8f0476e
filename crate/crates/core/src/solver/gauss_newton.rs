use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use super::dual::solve_spd;
use super::linearize::{damped, normal_equations, objective_prepared, prepare, PoseT, Prepared};
use super::problem::{BdpnpProblem, DEFAULT_DAMPING};
use crate::error::{Error, Result};
use crate::geometry::{retract, RigidTransform, Twist};

/// Damping escalations tried on a singular system before giving up.
pub const MAX_ESCALATIONS: usize = 3;

/// Outcome of one damped Gauss-Newton step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub step: Twist,
    pub pose: RigidTransform,
    /// `λ` that produced the step.
    pub damping: f64,
    /// Every escalation failed; `step` is zero.
    pub rank_deficient: bool,
    /// Rows with positive weight.
    pub effective_rows: usize,
}

/// Solves `(H + λ diag H) δ = g`, escalating `λ` ×10 on failure.
pub(crate) fn damped_solve(h: &[[f64; 6]; 6], g: &[f64; 6], lambda: f64) -> (Option<[f64; 6]>, f64) {
    let mut lambda = lambda;
    for attempt in 0..=MAX_ESCALATIONS {
        if let Some(x) = solve_spd(&damped(h, lambda), g) {
            return (Some(x), lambda);
        }
        if attempt < MAX_ESCALATIONS {
            lambda = if lambda > 0.0 { lambda * 10.0 } else { DEFAULT_DAMPING };
        }
    }
    (None, lambda)
}

pub(crate) fn step_prepared(prep: &Prepared, g0: &RigidTransform, lambda: f64) -> Result<StepOutcome> {
    let (h, g, effective_rows) = normal_equations(prep, &PoseT::from_rigid(g0));
    if effective_rows < 6 {
        return Err(Error::Underdetermined { rows: effective_rows });
    }
    let (x, damping) = damped_solve(&h, &g, lambda);
    Ok(match x {
        Some(x) => {
            let step = Twist::from_vector(&Vector6::from_column_slice(&x));
            StepOutcome {
                step,
                pose: retract(g0, &step),
                damping,
                rank_deficient: false,
                effective_rows,
            }
        }
        None => {
            log::warn!("normal equations singular after {MAX_ESCALATIONS} damping escalations");
            StepOutcome {
                step: Twist::zero(),
                pose: *g0,
                damping,
                rank_deficient: true,
                effective_rows,
            }
        }
    })
}

/// One damped Gauss-Newton update of `g0` over both directional sums.
pub fn gauss_newton_step(p: &BdpnpProblem, g0: &RigidTransform) -> Result<(Twist, RigidTransform)> {
    let out = gauss_newton_step_detailed(p, g0)?;
    Ok((out.step, out.pose))
}

pub fn gauss_newton_step_detailed(p: &BdpnpProblem, g0: &RigidTransform) -> Result<StepOutcome> {
    p.validate()?;
    step_prepared(&prepare(p), g0, p.options.damping)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Pose the step was linearized at.
    pub linearized_at: RigidTransform,
    /// Pose after the iteration.
    pub pose: RigidTransform,
    /// Objective at `linearized_at`.
    pub objective: f64,
    pub step: Twist,
    pub step_norm: f64,
    pub damping: f64,
    /// `false` when adaptive damping rejected the step.
    pub accepted: bool,
    pub rank_deficient: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub iterations: Vec<IterationRecord>,
    /// Any iteration hit a singular system.
    pub rank_deficient: bool,
    /// Channel weights outside `[0, 1]` that were clamped.
    pub clamped_weights: usize,
}

impl SolveTrace {
    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }
}

/// Runs `iters` Gauss-Newton iterations from `g_init`.
pub fn solve(p: &BdpnpProblem, g_init: &RigidTransform, iters: usize) -> Result<(RigidTransform, SolveTrace)> {
    p.validate()?;
    if iters == 0 {
        return Err(Error::InvalidArgument("solve needs at least one iteration".into()));
    }
    let clamped = p.clamped_weight_count();
    if clamped > 0 {
        log::warn!("{clamped} confidence weights outside [0, 1] were clamped");
    }
    let prep = prepare(p);
    let opts = &p.options;
    let mut trace = SolveTrace {
        clamped_weights: clamped,
        ..SolveTrace::default()
    };
    let mut g = *g_init;
    let mut lambda = opts.damping;
    let mut e = objective_prepared(&prep, &g);
    for _ in 0..iters {
        let out = step_prepared(&prep, &g, lambda)?;
        let mut accepted = true;
        let e_new = objective_prepared(&prep, &out.pose);
        if opts.adaptive_damping {
            if e_new > e + 1e-12 {
                accepted = false;
                lambda = out.damping * 10.0;
            } else {
                lambda = (out.damping / 10.0).max(1e-12);
            }
        }
        trace.rank_deficient |= out.rank_deficient;
        let norm = out.step.norm();
        let next = if accepted { out.pose } else { g };
        trace.iterations.push(IterationRecord {
            linearized_at: g,
            pose: next,
            objective: e,
            step: out.step,
            step_norm: norm,
            damping: out.damping,
            accepted,
            rank_deficient: out.rank_deficient,
        });
        if accepted {
            g = next;
            e = e_new;
        }
        if opts.early_exit.is_some_and(|tol| accepted && norm < tol) {
            break;
        }
    }
    Ok((g, trace))
}
