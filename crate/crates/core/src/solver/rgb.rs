//! Joint pose and image inverse-depth solve for inputs without sensor depth.
//!
//! Only the image→render residuals see the image depth, so the depth block of
//! the normal equations is diagonal and is eliminated per pixel.

use std::collections::HashMap;

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use super::dual::{add3, cross, mat_mul_t, mat_t_vec, mat_vec, solve_spd, V3};
use super::fields::effective_weight;
use super::gauss_newton::{IterationRecord, SolveTrace, MAX_ESCALATIONS};
use super::linearize::{damped, for_each_row, objective_prepared, prepare, PoseT, Prepared};
use super::problem::{BdpnpProblem, Direction, DEFAULT_DAMPING};
use crate::error::{Error, Result};
use crate::geometry::{retract, CorrespondenceField, RigidTransform, Twist, EPS_D, EPS_Z};

/// What happens to the solver's inverse-depth update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthPolicy {
    /// Drop it and re-render the image depth at the new pose.
    #[default]
    Discard,
    /// Add it to the current image inverse depth.
    Apply,
}

/// A residual row of the joint system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointRow {
    /// Image pixel whose inverse depth the row depends on.
    pub depth_pixel: Option<usize>,
    pub jacobian_pose: [f64; 6],
    pub jacobian_depth: f64,
    pub residual: f64,
    pub weight: f64,
}

/// Rows of the joint `(δξ, δd)` system at `g0`; depth enters through the
/// image→render rows only.
pub fn rgb_joint_rows(p: &BdpnpProblem, g0: &RigidTransform) -> Vec<JointRow> {
    let prep = prepare(p);
    let pose = PoseT::from_rigid(g0);
    let mut rows = Vec::new();
    for term in &prep.terms {
        match term.dir {
            Direction::RenderToImage => {
                // reuse the generic rows for the depth-free direction
                let single = Prepared {
                    terms: vec![term.clone()],
                    channels: prep.channels,
                    render_poses: prep.render_poses.clone(),
                };
                for_each_row(&single, &pose, |_, ri, c, j, pi, w| {
                    rows.push(JointRow {
                        depth_pixel: None,
                        jacobian_pose: *j,
                        jacobian_depth: 0.0,
                        residual: term.rows[ri].target[c] - pi,
                        weight: effective_weight(w),
                    });
                });
            }
            Direction::ImageToRender => {
                let (r_i, t_i) = &prep.render_poses[term.view];
                let r_t = mat_mul_t(r_i, &pose.r);
                let rt_t0 = mat_vec(&r_t, &pose.t);
                let t_t = [t_i[0] - rt_t0[0], t_i[1] - rt_t0[1], t_i[2] - rt_t0[2]];
                for row in &term.rows {
                    let x0: V3<f64> = [row.point.x, row.point.y, row.point.z];
                    let y = add3(&mat_vec(&r_t, &x0), &t_t);
                    if y[2] <= EPS_Z {
                        continue;
                    }
                    let iz = 1.0 / y[2];
                    let pi = [y[0] * iz, y[1] * iz, iz];
                    let dpi = [
                        [iz, 0.0, -y[0] * iz * iz],
                        [0.0, iz, -y[1] * iz * iz],
                        [0.0, 0.0, -iz * iz],
                    ];
                    // X₀ = Π⁻¹(x, y, d) ⇒ ∂X₀/∂d = −X₀ / d = −X₀ Z
                    let dx0_dd = x0.map(|c| -c * x0[2]);
                    for c in 0..prep.channels {
                        let b = mat_t_vec(&r_t, &dpi[c]);
                        let xb = cross(&x0, &b);
                        rows.push(JointRow {
                            depth_pixel: Some(row.pixel),
                            jacobian_pose: [-b[0], -b[1], -b[2], -xb[0], -xb[1], -xb[2]],
                            jacobian_depth: b[0] * dx0_dd[0] + b[1] * dx0_dd[1] + b[2] * dx0_dd[2],
                            residual: row.target[c] - pi[c],
                            weight: effective_weight(row.weight[c]),
                        });
                    }
                }
            }
        }
    }
    rows
}

/// A joint step: the pose part and the per-pixel inverse-depth updates.
#[derive(Clone, Debug, PartialEq)]
pub struct JointStep {
    pub step: Twist,
    pub depth_updates: HashMap<usize, f64>,
    pub damping: f64,
    pub rank_deficient: bool,
}

/// Solves the damped joint system by eliminating the diagonal depth block.
/// Damping `λ·diag` is applied to both blocks.
pub fn rgb_schur_step(p: &BdpnpProblem, g0: &RigidTransform, lambda: f64) -> Result<JointStep> {
    let rows = rgb_joint_rows(p, g0);
    let effective = rows.iter().filter(|r| r.weight > 0.0).count();
    if effective < 6 {
        return Err(Error::Underdetermined { rows: effective });
    }
    let mut h = [[0.0; 6]; 6];
    let mut g = [0.0; 6];
    // per pixel: (H_ξd, H_dd, g_d)
    let mut blocks: HashMap<usize, ([f64; 6], f64, f64)> = HashMap::new();
    for r in rows.iter().filter(|r| r.weight > 0.0) {
        let j = &r.jacobian_pose;
        for a in 0..6 {
            for b in 0..6 {
                h[a][b] += r.weight * j[a] * j[b];
            }
            g[a] += r.weight * j[a] * r.residual;
        }
        if let Some(px) = r.depth_pixel {
            let e = blocks.entry(px).or_insert(([0.0; 6], 0.0, 0.0));
            for a in 0..6 {
                e.0[a] += r.weight * j[a] * r.jacobian_depth;
            }
            e.1 += r.weight * r.jacobian_depth * r.jacobian_depth;
            e.2 += r.weight * r.jacobian_depth * r.residual;
        }
    }
    let scale = blocks.values().map(|b| b.1).fold(0.0, f64::max);
    blocks.retain(|_, b| b.1 > 1e-14 * scale.max(f64::MIN_POSITIVE));
    // deterministic reduction order
    let mut pixels: Vec<usize> = blocks.keys().copied().collect();
    pixels.sort_unstable();

    let mut lambda = lambda;
    for attempt in 0..=MAX_ESCALATIONS {
        let mut s = damped(&h, lambda);
        let mut rhs = g;
        for px in &pixels {
            let (hxd, hdd, gd) = blocks[px];
            let add = hdd * (1.0 + lambda);
            for a in 0..6 {
                for b in 0..6 {
                    s[a][b] -= hxd[a] * hxd[b] / add;
                }
                rhs[a] -= hxd[a] * gd / add;
            }
        }
        if let Some(x) = solve_spd(&s, &rhs) {
            let depth_updates = pixels
                .iter()
                .map(|px| {
                    let (hxd, hdd, gd) = blocks[px];
                    let dot: f64 = (0..6).map(|a| hxd[a] * x[a]).sum();
                    (*px, (gd - dot) / (hdd * (1.0 + lambda)))
                })
                .collect();
            return Ok(JointStep {
                step: Twist::from_vector(&Vector6::from_column_slice(&x)),
                depth_updates,
                damping: lambda,
                rank_deficient: false,
            });
        }
        if attempt < MAX_ESCALATIONS {
            lambda = if lambda > 0.0 { lambda * 10.0 } else { DEFAULT_DAMPING };
        }
    }
    log::warn!("joint pose/depth system singular after {MAX_ESCALATIONS} damping escalations");
    Ok(JointStep {
        step: Twist::zero(),
        depth_updates: HashMap::new(),
        damping: lambda,
        rank_deficient: true,
    })
}

/// Iterates the joint solve starting from the image field of `p`, normally
/// a render at `g_init`. After each step the depth update is discarded and
/// the image re-rendered with `render`, or applied, according to `policy`.
/// Returns the final pose, the trace and the final image field.
pub fn solve_rgb(
    p: &BdpnpProblem,
    render: &dyn Fn(&RigidTransform) -> Result<CorrespondenceField>,
    g_init: &RigidTransform,
    iters: usize,
    policy: DepthPolicy,
) -> Result<(RigidTransform, SolveTrace, CorrespondenceField)> {
    p.validate()?;
    if iters == 0 {
        return Err(Error::InvalidArgument("solve needs at least one iteration".into()));
    }
    let mut prob = p.clone();
    let mut g = *g_init;
    let mut trace = SolveTrace {
        clamped_weights: p.clamped_weight_count(),
        ..SolveTrace::default()
    };
    for _ in 0..iters {
        let e = objective_prepared(&prepare(&prob), &g);
        let js = rgb_schur_step(&prob, &g, prob.options.damping)?;
        let next = retract(&g, &js.step);
        trace.rank_deficient |= js.rank_deficient;
        trace.iterations.push(IterationRecord {
            linearized_at: g,
            pose: next,
            objective: e,
            step: js.step,
            step_norm: js.step.norm(),
            damping: js.damping,
            accepted: true,
            rank_deficient: js.rank_deficient,
        });
        g = next;
        match policy {
            DepthPolicy::Discard => {
                prob.image = render(&g)?;
                prob.image.same_shape(p.image.width, p.image.height)?;
            }
            DepthPolicy::Apply => {
                for (px, dd) in &js.depth_updates {
                    let d = prob.image.points[*px].z + dd;
                    if d > EPS_D {
                        prob.image.points[*px].z = d;
                    } else {
                        prob.image.mask[*px] = false;
                    }
                }
            }
        }
    }
    Ok((g, trace, prob.image))
}
