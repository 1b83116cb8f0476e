//! Residual rows of the bidirectional objective, generic over the scalar so
//! the same code yields values (`f64`) and pose derivatives (`Dual6`).

use nalgebra::Vector3;

use super::dual::{add3, cross, mat_mul_t, mat_t_vec, mat_vec, Dual6, Real, M3, V3};
use super::fields::effective_weight;
use super::problem::{BdpnpProblem, Direction};
use crate::geometry::{backproject, AugmentedPoint, RigidTransform, EPS_Z};

/// One pixel of one directional term, with its fixed source point.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PixelRow {
    pub pixel: usize,
    /// Render→image: the point in the object frame, `Gᵢ⁻¹ Π⁻¹(xᵢ)`.
    /// Image→render: the image-frame point `Π⁻¹(x₀)`.
    pub point: Vector3<f64>,
    pub target: Vector3<f64>,
    /// Raw (unclamped) channel weights.
    pub weight: Vector3<f64>,
}

#[derive(Clone, Debug)]
pub(crate) struct PreparedTerm {
    pub view: usize,
    pub dir: Direction,
    pub rows: Vec<PixelRow>,
}

/// Valid pixels of every active term, gathered once per problem.
#[derive(Clone, Debug)]
pub(crate) struct Prepared {
    pub terms: Vec<PreparedTerm>,
    pub channels: usize,
    /// `(Rᵢ, tᵢ)` per view.
    pub render_poses: Vec<(M3<f64>, V3<f64>)>,
}

pub(crate) fn prepare(p: &BdpnpProblem) -> Prepared {
    let mut terms = Vec::new();
    for (vi, view) in p.views.iter().enumerate() {
        let inv = view.pose.inverse();
        for dir in [Direction::RenderToImage, Direction::ImageToRender] {
            if !p.options.direction.uses(dir) {
                continue;
            }
            let (source, term) = match dir {
                Direction::RenderToImage => (&view.render, &view.render_to_image),
                Direction::ImageToRender => (&p.image, &view.image_to_render),
            };
            let mut rows = Vec::new();
            for i in 0..source.len() {
                if !(source.mask[i] && term.target.mask[i]) {
                    continue;
                }
                let Some(x) = backproject(&AugmentedPoint::from_vector(&source.points[i])) else {
                    continue;
                };
                let point = match dir {
                    Direction::RenderToImage => inv.transform_point(&x),
                    Direction::ImageToRender => x,
                };
                rows.push(PixelRow {
                    pixel: i,
                    point,
                    target: term.target.points[i],
                    weight: term.weights.weights[i],
                });
            }
            terms.push(PreparedTerm { view: vi, dir, rows });
        }
    }
    Prepared {
        terms,
        channels: if p.options.depth_augmented { 3 } else { 2 },
        render_poses: p.views.iter().map(|v| (to_m3(&v.pose), to_v3(&v.pose))).collect(),
    }
}

pub(crate) fn to_m3(g: &RigidTransform) -> M3<f64> {
    std::array::from_fn(|i| std::array::from_fn(|j| g.rotation[(i, j)]))
}

pub(crate) fn to_v3(g: &RigidTransform) -> V3<f64> {
    std::array::from_fn(|i| g.translation[i])
}

/// A pose in the generic scalar.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PoseT<T> {
    pub r: M3<T>,
    pub t: V3<T>,
}

impl PoseT<f64> {
    pub fn from_rigid(g: &RigidTransform) -> Self {
        Self {
            r: to_m3(g),
            t: to_v3(g),
        }
    }
}

impl PoseT<Dual6> {
    /// `exp(ε) G` to first order in the dual variables `ε = (v, ω)`.
    pub fn perturbed(g: &RigidTransform) -> Self {
        let e: [Dual6; 6] = std::array::from_fn(|j| Dual6::var(0.0, j));
        let one = Dual6::cst(1.0);
        let w = [e[3], e[4], e[5]];
        let left: M3<Dual6> = [[one, -w[2], w[1]], [w[2], one, -w[0]], [-w[1], w[0], one]];
        let r0: M3<Dual6> = std::array::from_fn(|i| std::array::from_fn(|j| Dual6::cst(g.rotation[(i, j)])));
        let t0: V3<Dual6> = std::array::from_fn(|i| Dual6::cst(g.translation[i]));
        let r = std::array::from_fn(|i| {
            std::array::from_fn(|j| left[i][0] * r0[0][j] + left[i][1] * r0[1][j] + left[i][2] * r0[2][j])
        });
        let t = add3(&mat_vec(&left, &t0), &[e[0], e[1], e[2]]);
        Self { r, t }
    }
}

/// Visits every active residual row at pose `g0`: `(term, row, channel,
/// ∂Π/∂ξ, Π, weight)`. Rows whose reprojection is not in front of the
/// camera are skipped.
pub(crate) fn for_each_row<T: Real>(
    prep: &Prepared,
    g0: &PoseT<T>,
    mut visit: impl FnMut(usize, usize, usize, &[T; 6], T, f64),
) {
    for (ti, term) in prep.terms.iter().enumerate() {
        match term.dir {
            Direction::RenderToImage => {
                for (ri, row) in term.rows.iter().enumerate() {
                    let x: V3<T> = [T::cst(row.point.x), T::cst(row.point.y), T::cst(row.point.z)];
                    let p = add3(&mat_vec(&g0.r, &x), &g0.t);
                    if p[2].re() <= EPS_Z {
                        continue;
                    }
                    let (pi, rows) = projection_rows(&p);
                    for c in 0..prep.channels {
                        let a = &rows[c];
                        let pa = cross(&p, a);
                        let j = [a[0], a[1], a[2], pa[0], pa[1], pa[2]];
                        visit(ti, ri, c, &j, pi[c], row.weight[c]);
                    }
                }
            }
            Direction::ImageToRender => {
                let (ri_rot, ri_t) = &prep.render_poses[term.view];
                let r_i: M3<T> = ri_rot.map(|r| r.map(T::cst));
                let t_i: V3<T> = ri_t.map(T::cst);
                // T = Gᵢ G₀⁻¹
                let r_t = mat_mul_t(&r_i, &g0.r);
                let rt_t0 = mat_vec(&r_t, &g0.t);
                let t_t = [t_i[0] - rt_t0[0], t_i[1] - rt_t0[1], t_i[2] - rt_t0[2]];
                for (ri, row) in term.rows.iter().enumerate() {
                    let x0: V3<T> = [T::cst(row.point.x), T::cst(row.point.y), T::cst(row.point.z)];
                    let y = add3(&mat_vec(&r_t, &x0), &t_t);
                    if y[2].re() <= EPS_Z {
                        continue;
                    }
                    let (pi, rows) = projection_rows(&y);
                    for c in 0..prep.channels {
                        let b = mat_t_vec(&r_t, &rows[c]);
                        let xb = cross(&x0, &b);
                        let j = [-b[0], -b[1], -b[2], -xb[0], -xb[1], -xb[2]];
                        visit(ti, ri, c, &j, pi[c], row.weight[c]);
                    }
                }
            }
        }
    }
}

/// `Π(p)` and the rows of `∂Π/∂p`.
#[inline]
fn projection_rows<T: Real>(p: &V3<T>) -> (V3<T>, [V3<T>; 3]) {
    let iz = T::cst(1.0) / p[2];
    let iz2 = iz * iz;
    let zero = T::cst(0.0);
    let pi = [p[0] * iz, p[1] * iz, iz];
    let rows = [[iz, zero, -(p[0] * iz2)], [zero, iz, -(p[1] * iz2)], [zero, zero, -iz2]];
    (pi, rows)
}

/// Undamped normal equations `H = Σ w J Jᵀ`, `g = Σ w J e` and the number of
/// rows with positive weight.
pub(crate) fn normal_equations<T: Real>(prep: &Prepared, g0: &PoseT<T>) -> ([[T; 6]; 6], [T; 6], usize) {
    let mut h = [[T::cst(0.0); 6]; 6];
    let mut g = [T::cst(0.0); 6];
    let mut effective = 0;
    for_each_row(prep, g0, |ti, ri, c, j, pi, w| {
        let w = effective_weight(w);
        if w <= 0.0 {
            return;
        }
        effective += 1;
        let e = T::cst(prep.terms[ti].rows[ri].target[c]) - pi;
        let wj: [T; 6] = j.map(|x| x.scale(w));
        for a in 0..6 {
            for b in 0..=a {
                h[a][b] = h[a][b] + wj[a] * j[b];
            }
            g[a] = g[a] + wj[a] * e;
        }
    });
    for a in 0..6 {
        for b in a + 1..6 {
            h[a][b] = h[b][a];
        }
    }
    (h, g, effective)
}

/// `H + λ diag(H)`.
pub(crate) fn damped<T: Real>(h: &[[T; 6]; 6], lambda: f64) -> [[T; 6]; 6] {
    let mut a = *h;
    for i in 0..6 {
        a[i][i] = a[i][i] + h[i][i].scale(lambda);
    }
    a
}

/// `E(G₀) = Σ w (x′ − Π)²` over the active rows.
pub(crate) fn objective_prepared(prep: &Prepared, g0: &RigidTransform) -> f64 {
    let mut e = 0.0;
    for_each_row(prep, &PoseT::from_rigid(g0), |ti, ri, c, _, pi, w| {
        let r = prep.terms[ti].rows[ri].target[c] - pi;
        e += effective_weight(w) * r * r;
    });
    e
}

/// A residual row with its pixel address, for external checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearRow {
    pub view: usize,
    pub direction: Direction,
    pub pixel: usize,
    pub channel: usize,
    /// `∂Π/∂ξ` for a left perturbation of `G₀`.
    pub jacobian: [f64; 6],
    /// `x′ − Π`.
    pub residual: f64,
    /// Clamped weight.
    pub weight: f64,
}

/// Every active row at `g0`, including zero-weight ones.
pub fn linearize(p: &BdpnpProblem, g0: &RigidTransform) -> Vec<LinearRow> {
    let prep = prepare(p);
    let mut out = Vec::new();
    for_each_row(&prep, &PoseT::from_rigid(g0), |ti, ri, c, j, pi, w| {
        let term = &prep.terms[ti];
        let row = &term.rows[ri];
        out.push(LinearRow {
            view: term.view,
            direction: term.dir,
            pixel: row.pixel,
            channel: c,
            jacobian: *j,
            residual: row.target[c] - pi,
            weight: effective_weight(w),
        });
    });
    out
}

/// `E(G₀) = Σ w (x′ − Π)²` with the weights as given (negative ones read as
/// zero). The solver itself minimizes the same sum with weights clamped to
/// `[0, W_MAX]`; the two agree whenever the weights are in range.
pub fn objective(p: &BdpnpProblem, g0: &RigidTransform) -> f64 {
    let prep = prepare(p);
    let mut e = 0.0;
    for_each_row(&prep, &PoseT::from_rigid(g0), |ti, ri, c, _, pi, w| {
        let r = prep.terms[ti].rows[ri].target[c] - pi;
        e += w.max(0.0) * r * r;
    });
    e
}
