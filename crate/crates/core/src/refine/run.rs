//! The coupled loop: outer iterations re-render views at the estimate, inner
//! iterations revise correspondences and re-solve the pose.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::provider::{FeatureView, ProviderInput, RevisionProvider};
use super::residuals::{depth_residuals, solver_residual_features};
use super::views::{perturbed_view_poses_with, InputMode, DEFAULT_VIEW_ANGLE_DEG};
use crate::correlation::{FeatureMap, OnDemandCorrelation, DEFAULT_LEVELS, DEFAULT_RADIUS};
use crate::error::{Error, Result};
use crate::geometry::{CorrespondenceField, Intrinsics, RigidTransform, ScalarField};
use crate::scene::{render_depth, DepthMap, ObjectModel, Scene, FIELD_FACTOR};
use crate::solver::{
    apply_revisions, objective, solve, solve_rgb, BdpnpProblem, DepthPolicy, Direction, DirectionalTerm, SolverOptions,
    ViewPair,
};

pub const DEFAULT_INNER: usize = 40;
pub const DEFAULT_OUTER: usize = 1;
/// Outer loops of the most accurate configuration.
pub const FINAL_OUTER: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefinementConfig {
    pub inner: usize,
    pub outer: usize,
    /// Per inner step; `solver.iterations` is the Gauss-Newton count.
    pub solver: SolverOptions,
    /// Defaults to 7 for RGB-D and 13 for RGB.
    pub views: Option<usize>,
    pub view_angle_deg: f64,
    pub mode: InputMode,
    /// RGB only.
    pub depth_policy: DepthPolicy,
    /// Image pixels per field-grid pixel along each axis.
    pub field_factor: usize,
    pub correlation_levels: usize,
    pub correlation_radius: usize,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            inner: DEFAULT_INNER,
            outer: DEFAULT_OUTER,
            solver: SolverOptions::default(),
            views: None,
            view_angle_deg: DEFAULT_VIEW_ANGLE_DEG,
            mode: InputMode::Rgbd,
            depth_policy: DepthPolicy::Discard,
            field_factor: FIELD_FACTOR,
            correlation_levels: DEFAULT_LEVELS,
            correlation_radius: DEFAULT_RADIUS,
        }
    }
}

impl RefinementConfig {
    /// Four outer loops of 40 inner iterations.
    pub fn final_results() -> Self {
        Self {
            outer: FINAL_OUTER,
            ..Self::default()
        }
    }

    pub fn view_count(&self) -> usize {
        self.views.unwrap_or(self.mode.default_views())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.inner == 0 || self.outer == 0 || self.field_factor == 0 || self.correlation_levels == 0 {
            return bad("inner, outer, field_factor and correlation_levels must be ≥ 1");
        }
        if self.views == Some(0) {
            return bad("view count must be ≥ 1");
        }
        if !(self.view_angle_deg > 0.0 && self.view_angle_deg < 90.0) {
            return bad("view angle must be in (0°, 90°)");
        }
        self.solver.validate()
    }
}

/// One inner iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerRecord {
    pub outer: usize,
    pub inner: usize,
    /// First inner iteration after a re-render.
    pub outer_start: bool,
    pub pose: RigidTransform,
    pub rotation_error: f64,
    pub translation_error: f64,
    /// Objective of the revised problem before and after the solve.
    pub objective_before: f64,
    pub objective_after: f64,
    /// Target pixels with a valid revised correspondence, over all views and
    /// directions.
    pub valid_targets: usize,
    pub rank_deficient: bool,
    pub last_step_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    pub pose: RigidTransform,
    pub records: Vec<InnerRecord>,
    pub rank_deficient: bool,
}

/// Points of a depth render at `pose` on `grid`.
pub fn render_field(
    model: &ObjectModel,
    pose: &RigidTransform,
    grid: &Intrinsics,
) -> Result<(DepthMap, CorrespondenceField)> {
    let depth = render_depth(model, pose, grid);
    let field = CorrespondenceField::from_depth(&depth, grid)?;
    Ok((depth, field))
}

struct View {
    pose: RigidTransform,
    field: CorrespondenceField,
    inverse_depth: ScalarField,
    correlation: Option<[OnDemandCorrelation; 2]>,
}

fn dir_index(d: Direction) -> usize {
    match d {
        Direction::RenderToImage => 0,
        Direction::ImageToRender => 1,
    }
}

struct Session<'a> {
    scene: &'a Scene,
    cfg: &'a RefinementConfig,
    grid: Intrinsics,
    sensor_field: CorrespondenceField,
    image_features: Option<FeatureMap>,
}

struct Assembled {
    problem: BdpnpProblem,
    revised: Vec<[CorrespondenceField; 2]>,
    valid_targets: usize,
}

impl<'a> Session<'a> {
    fn new(scene: &'a Scene, provider: &dyn RevisionProvider, cfg: &'a RefinementConfig) -> Result<Self> {
        cfg.validate()?;
        let (grid, sensor) = scene.field_grid(cfg.field_factor);
        let sensor_field = CorrespondenceField::from_depth(&sensor, &grid)?;
        let image_features = provider
            .features(FeatureView::Image {
                depth: &sensor,
                grid: &grid,
            })
            .transpose()?;
        Ok(Self {
            scene,
            cfg,
            grid,
            sensor_field,
            image_features,
        })
    }

    fn render(&self, g: &RigidTransform) -> Result<CorrespondenceField> {
        Ok(render_field(&self.scene.model, g, &self.grid)?.1)
    }

    /// Image field an outer loop starts from.
    fn initial_image(&self, g: &RigidTransform) -> Result<CorrespondenceField> {
        match self.cfg.mode {
            InputMode::Rgbd => Ok(self.sensor_field.clone()),
            InputMode::Rgb => self.render(g),
        }
    }

    fn views(&self, provider: &dyn RevisionProvider, g: &RigidTransform) -> Result<Vec<View>> {
        let cfg = self.cfg;
        let grid = &self.grid;
        let mut views = Vec::new();
        for pose in perturbed_view_poses_with(g, cfg.view_count(), cfg.view_angle_deg)? {
            let (depth, field) = render_field(&self.scene.model, &pose, grid)?;
            let correlation = match (
                &self.image_features,
                provider.features(FeatureView::Render {
                    depth: &depth,
                    grid,
                    pose: &pose,
                }),
            ) {
                (Some(img), Some(rf)) => {
                    let rf = rf?;
                    Some([
                        OnDemandCorrelation::new(rf.clone(), img.clone(), cfg.correlation_levels)?,
                        OnDemandCorrelation::new(img.clone(), rf, cfg.correlation_levels)?,
                    ])
                }
                _ => None,
            };
            views.push(View {
                pose,
                inverse_depth: field.inverse_depth(),
                field,
                correlation,
            });
        }
        Ok(views)
    }

    /// Asks the provider for revisions of every view and direction at `g`
    /// and builds the problem they define.
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        &self,
        provider: &mut dyn RevisionProvider,
        outer: usize,
        inner: usize,
        g: &RigidTransform,
        image: &CorrespondenceField,
        views: &[View],
        previous: Option<&[[CorrespondenceField; 2]]>,
    ) -> Result<Assembled> {
        let cfg = self.cfg;
        let grid = &self.grid;
        let radius = cfg.correlation_radius;
        let image_inv = image.inverse_depth();
        let mut pairs = Vec::with_capacity(views.len());
        let mut revised = Vec::with_capacity(views.len());
        let mut valid_targets = 0;
        for (vi, view) in views.iter().enumerate() {
            let mut terms = Vec::with_capacity(2);
            for dir in [Direction::RenderToImage, Direction::ImageToRender] {
                let (source, induced, target_inv) = match dir {
                    Direction::RenderToImage => (
                        &view.field,
                        view.field.transfer(&(*g * view.pose.inverse())),
                        &image_inv,
                    ),
                    Direction::ImageToRender => {
                        (image, image.transfer(&(view.pose * g.inverse())), &view.inverse_depth)
                    }
                };
                let dres = depth_residuals(target_inv, &induced, grid)?;
                let prev = previous.map(|p| &p[vi][dir_index(dir)]);
                let sres = solver_residual_features(&induced, prev)?;
                let lookup = match &view.correlation {
                    Some(c) => Some(c[dir_index(dir)].lookup(&induced, grid, radius)?),
                    None => None,
                };
                let out = provider.revise(&ProviderInput {
                    outer,
                    inner,
                    view: vi,
                    direction: dir,
                    grid,
                    estimate: g,
                    render_pose: &view.pose,
                    source,
                    induced: &induced,
                    correlation: lookup.as_deref(),
                    correlation_len: cfg.correlation_levels * (2 * radius + 1) * (2 * radius + 1),
                    correlation_radius: radius,
                    context: self.image_features.as_ref(),
                    depth_residuals: &dres,
                    solver_residuals: &sres,
                })?;
                if out.confidence.width != induced.width || out.confidence.height != induced.height {
                    return Err(Error::shape(
                        format!("{}×{} confidences", induced.width, induced.height),
                        format!("{}×{}", out.confidence.width, out.confidence.height),
                    ));
                }
                let target = apply_revisions(&induced, &out.revision)?;
                valid_targets += target.valid_count();
                terms.push(DirectionalTerm {
                    target,
                    weights: out.confidence,
                });
            }
            let image_to_render = terms.pop().expect("two terms");
            let render_to_image = terms.pop().expect("two terms");
            revised.push([render_to_image.target.clone(), image_to_render.target.clone()]);
            pairs.push(ViewPair {
                pose: view.pose,
                render: view.field.clone(),
                render_to_image,
                image_to_render,
            });
        }
        Ok(Assembled {
            problem: BdpnpProblem::new(image.clone(), pairs, cfg.solver)?,
            revised,
            valid_targets,
        })
    }
}

/// The problem of the first inner iteration at `g`: views rendered around
/// `g` and one round of provider revisions.
pub fn assemble_problem(
    scene: &Scene,
    g: &RigidTransform,
    provider: &mut dyn RevisionProvider,
    cfg: &RefinementConfig,
) -> Result<BdpnpProblem> {
    let session = Session::new(scene, provider, cfg)?;
    provider.reset(0);
    let views = session.views(provider, g)?;
    let image = session.initial_image(g)?;
    Ok(session.assemble(provider, 0, 0, g, &image, &views, None)?.problem)
}

/// Refines `g_init` against `scene`. Pose errors in the records are
/// measured against `scene.gt_pose`.
///
/// Fails only when a solve has fewer than six usable residuals, i.e. the
/// masks collapsed; singular systems are flagged in the records instead.
pub fn refine_pose(
    scene: &Scene,
    g_init: &RigidTransform,
    provider: &mut dyn RevisionProvider,
    cfg: &RefinementConfig,
) -> Result<Refinement> {
    let session = Session::new(scene, provider, cfg)?;
    let render = |g: &RigidTransform| session.render(g);
    let mut g = *g_init;
    let mut records = Vec::with_capacity(cfg.inner * cfg.outer);
    let mut any_rank_deficient = false;
    for outer in 0..cfg.outer {
        provider.reset(outer);
        let views = session.views(provider, &g)?;
        let mut image = session.initial_image(&g)?;
        let mut previous: Option<Vec<[CorrespondenceField; 2]>> = None;
        for inner in 0..cfg.inner {
            let Assembled {
                problem,
                revised,
                valid_targets,
            } = session.assemble(provider, outer, inner, &g, &image, &views, previous.as_deref())?;
            let before = objective(&problem, &g);
            let (next, trace) = match cfg.mode {
                InputMode::Rgbd => solve(&problem, &g, cfg.solver.iterations)?,
                InputMode::Rgb => {
                    let (next, trace, img) = solve_rgb(&problem, &render, &g, cfg.solver.iterations, cfg.depth_policy)?;
                    image = img;
                    (next, trace)
                }
            };
            let after = match cfg.mode {
                InputMode::Rgbd => objective(&problem, &next),
                InputMode::Rgb => objective(
                    &BdpnpProblem {
                        image: image.clone(),
                        ..problem
                    },
                    &next,
                ),
            };
            any_rank_deficient |= trace.rank_deficient;
            records.push(InnerRecord {
                outer,
                inner,
                outer_start: inner == 0,
                pose: next,
                rotation_error: next.rotation_distance(&scene.gt_pose),
                translation_error: next.translation_distance(&scene.gt_pose),
                objective_before: before,
                objective_after: after,
                valid_targets,
                rank_deficient: trace.rank_deficient,
                last_step_norm: trace.iterations.last().map_or(0.0, |r| r.step_norm),
            });
            previous = Some(revised);
            g = next;
        }
    }
    Ok(Refinement {
        pose: g,
        records,
        rank_deficient: any_rank_deficient,
    })
}

/// Refines independent objects in parallel. `make_provider(i)` builds the
/// provider of job `i`; results come back in job order.
pub fn refine_many<P, F>(
    jobs: &[(Scene, RigidTransform)],
    make_provider: F,
    cfg: &RefinementConfig,
) -> Vec<Result<Refinement>>
where
    P: RevisionProvider,
    F: Fn(usize) -> Result<P> + Sync,
{
    jobs.par_iter()
        .enumerate()
        .map(|(i, (scene, g0))| {
            let mut p = make_provider(i)?;
            refine_pose(scene, g0, &mut p, cfg)
        })
        .collect()
}
