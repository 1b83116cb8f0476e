//! Finite-difference checks of the solver gradients on random problems.

use nalgebra::Vector6;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gauss_newton::solve;
use super::problem::{BdpnpProblem, Direction};
use super::random::{random_problem, RandomProblemSpec};
use super::vjp::solver_vjp;
use crate::error::{Error, Result};
use crate::geometry::se3_log;
use crate::scene::{apply_perturbation, fixed_perturbation};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckSpec {
    pub pixels: usize,
    pub views: usize,
    pub gn_iters: usize,
    /// Central-difference step.
    pub step: f64,
    /// Target noise of the random problems.
    pub noise: f64,
    /// Relative errors divide by `max(|fd|, |analytic|, floor)`.
    pub floor: f64,
}

impl Default for GradcheckSpec {
    fn default() -> Self {
        Self {
            pixels: 5,
            views: 1,
            gn_iters: 1,
            step: 1e-5,
            noise: 0.02,
            floor: 1e-6,
        }
    }
}

impl GradcheckSpec {
    pub fn validate(&self) -> Result<()> {
        if self.pixels == 0 || self.views == 0 || self.gn_iters == 0 {
            return Err(Error::InvalidArgument(
                "gradcheck needs pixels, views and gn_iters ≥ 1".into(),
            ));
        }
        if !(self.step > 0.0 && self.floor > 0.0 && self.noise >= 0.0) {
            return Err(Error::InvalidArgument(
                "gradcheck step and floor must be > 0, noise ≥ 0".into(),
            ));
        }
        Ok(())
    }
}

/// Worst relative errors of one problem, per parameter class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckResult {
    pub seed: u64,
    pub target: f64,
    pub weight: f64,
}

impl GradcheckResult {
    pub fn max(&self) -> f64 {
        self.target.max(self.weight)
    }
}

/// Compares `solver_vjp` against central differences of the loss
/// `uᵀ log(G(θ)·G(θ₀)⁻¹)` for a random upstream `u`, over every target and
/// weight channel of a random problem.
pub fn gradcheck(spec: &GradcheckSpec, seed: u64) -> Result<GradcheckResult> {
    spec.validate()?;
    let (mut p, truth) = random_problem(
        &RandomProblemSpec {
            pixels: spec.pixels,
            views: spec.views,
            noise: spec.noise,
            weight_lo: 0.2,
            weight_hi: 0.8,
        },
        seed,
    );
    p.options.iterations = spec.gn_iters;
    let g0 = apply_perturbation(&truth, &fixed_perturbation(5.0, 0.02, seed));
    let (nominal, trace) = solve(&p, &g0, spec.gn_iters)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let up = Vector6::from_fn(|_, _| rng.random_range(-1.0..1.0));
    let grads = solver_vjp(&p, &trace, &up)?;
    let loss = |q: &BdpnpProblem| -> Result<f64> {
        let (out, _) = solve(q, &g0, spec.gn_iters)?;
        Ok(up.dot(&se3_log(&(out * nominal.inverse())).to_vector()))
    };
    let h = spec.step;
    let mut out = GradcheckResult {
        seed,
        target: 0.0,
        weight: 0.0,
    };
    for v in 0..spec.views {
        for dir in [Direction::RenderToImage, Direction::ImageToRender] {
            for i in 0..spec.pixels {
                for c in 0..3 {
                    for is_weight in [false, true] {
                        let bump = |d: f64| {
                            let mut q = p.clone();
                            let t = q.term_mut(v, dir);
                            if is_weight {
                                t.weights.weights[i][c] += d;
                            } else {
                                t.target.points[i][c] += d;
                            }
                            loss(&q)
                        };
                        let fd = (bump(h)? - bump(-h)?) / (2.0 * h);
                        let g = &grads.views[v];
                        let an = if is_weight {
                            g.weight(dir)[i][c]
                        } else {
                            g.target(dir)[i][c]
                        };
                        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(spec.floor);
                        let slot = if is_weight { &mut out.weight } else { &mut out.target };
                        *slot = slot.max(rel);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_is_accurate() {
        for seed in 0..3 {
            let r = gradcheck(&GradcheckSpec::default(), seed).unwrap();
            assert!(r.max() < 1e-4, "{r:?}");
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = GradcheckSpec {
            gn_iters: 0,
            ..GradcheckSpec::default()
        };
        assert!(gradcheck(&bad, 0).is_err());
    }
}
