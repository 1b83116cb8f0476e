//! Revision providers: whatever supplies the per-pixel revisions and
//! confidences each inner iteration.
//!
//! A learned update operator would sit behind [`RevisionProvider`]; this
//! crate ships a ground-truth oracle with a configurable noise model and a
//! correlation-matching provider driven by positional features.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::correlation::{positional_features, FeatureMap};
use crate::error::{Error, Result};
use crate::geometry::{CorrespondenceField, Intrinsics, RigidTransform, ScalarField};
use crate::scene::{DepthMap, Scene};
use crate::solver::{ConfidenceField, Direction, RevisionField};

/// Which view a feature map is requested for.
#[derive(Clone, Copy, Debug)]
pub enum FeatureView<'a> {
    /// The observed image; `depth` is the sensor depth on the field grid.
    Image { depth: &'a DepthMap, grid: &'a Intrinsics },
    Render {
        depth: &'a DepthMap,
        grid: &'a Intrinsics,
        pose: &'a RigidTransform,
    },
}

/// Everything a provider sees for one (view, direction) pair.
#[derive(Clone, Copy, Debug)]
pub struct ProviderInput<'a> {
    pub outer: usize,
    pub inner: usize,
    pub view: usize,
    pub direction: Direction,
    pub grid: &'a Intrinsics,
    /// Current estimate `G_0`.
    pub estimate: &'a RigidTransform,
    /// Render pose `G_i`.
    pub render_pose: &'a RigidTransform,
    /// Source view points `(x, y, 1/Z)` in its own normalized coordinates.
    pub source: &'a CorrespondenceField,
    /// Pose-induced correspondences into the other view.
    pub induced: &'a CorrespondenceField,
    /// Correlation lookup, `correlation_len` values per pixel, when the
    /// provider supplies features.
    pub correlation: Option<&'a [f64]>,
    pub correlation_len: usize,
    pub correlation_radius: usize,
    /// Image features, the context slot.
    pub context: Option<&'a FeatureMap>,
    pub depth_residuals: &'a ScalarField,
    pub solver_residuals: &'a [Vector3<f64>],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProviderOutput {
    pub revision: RevisionField,
    pub confidence: ConfidenceField,
}

pub trait RevisionProvider {
    /// Called at the start of every outer loop, before any `revise`. What a
    /// provider keeps across loops is its own business.
    fn reset(&mut self, _outer: usize) {}

    /// Feature maps for correlation. Returning `None` skips correlation.
    fn features(&self, _view: FeatureView<'_>) -> Option<Result<FeatureMap>> {
        None
    }

    fn revise(&mut self, input: &ProviderInput<'_>) -> Result<ProviderOutput>;
}

/// Noise model of [`OracleProvider`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// Std of the coordinate noise, in field-grid pixels.
    pub noise_px: f64,
    /// Fraction of pixels given a uniformly random target.
    pub outlier_rate: f64,
    /// Confidence assigned to outliers; inliers get 1.
    pub outlier_weight: f64,
    /// Relative std of the inverse-depth noise. Defaults to the coordinate
    /// noise in normalized units.
    pub depth_noise: Option<f64>,
    /// Noise grows as `1 + gap_scale·θ` with `θ` the rotation (rad) between
    /// the render and the true pose.
    pub gap_scale: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            noise_px: 0.0,
            outlier_rate: 0.0,
            outlier_weight: 0.0,
            depth_noise: None,
            gap_scale: 1.0,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.noise_px >= 0.0 && self.noise_px.is_finite()) {
            return bad(format!("noise must be finite and ≥ 0, got {}", self.noise_px));
        }
        if !(0.0..=1.0).contains(&self.outlier_rate) {
            return bad(format!("outlier rate must be in [0, 1], got {}", self.outlier_rate));
        }
        if !(0.0..=1.0).contains(&self.outlier_weight) {
            return bad(format!("outlier weight must be in [0, 1], got {}", self.outlier_weight));
        }
        if self.depth_noise.is_some_and(|d| !(d >= 0.0 && d.is_finite())) || !(self.gap_scale >= 0.0) {
            return bad("depth noise and gap scale must be ≥ 0".into());
        }
        Ok(())
    }
}

/// Revisions that move each induced correspondence onto the true one, plus
/// noise and outliers.
///
/// Noise and outlier draws depend only on `(seed, outer, view, direction)`
/// and the pixel index, so they stay fixed over the inner loop and the
/// revised targets do not jitter between iterations.
#[derive(Clone, Debug)]
pub struct OracleProvider {
    pub truth: RigidTransform,
    /// Image points from the sensor depth at the true pose.
    pub image_truth: CorrespondenceField,
    pub config: OracleConfig,
}

impl OracleProvider {
    pub fn new(truth: RigidTransform, image_truth: CorrespondenceField, config: OracleConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            truth,
            image_truth,
            config,
        })
    }

    /// Oracle for `scene` on the grid reduced by `factor`.
    pub fn for_scene(scene: &Scene, factor: usize, config: OracleConfig) -> Result<Self> {
        let (grid, depth) = scene.field_grid(factor);
        Self::new(scene.gt_pose, CorrespondenceField::from_depth(&depth, &grid)?, config)
    }

    fn stream(outer: usize, view: usize, dir: Direction) -> u64 {
        let d = match dir {
            Direction::RenderToImage => 0,
            Direction::ImageToRender => 1,
        };
        ((outer as u64) << 32) | ((view as u64) << 1) | d
    }

    /// True correspondences for one direction of render `render_pose`.
    pub fn true_targets(
        &self,
        dir: Direction,
        render_pose: &RigidTransform,
        render: &CorrespondenceField,
    ) -> CorrespondenceField {
        match dir {
            Direction::RenderToImage => render.transfer(&(self.truth * render_pose.inverse())),
            Direction::ImageToRender => self.image_truth.transfer(&(render_pose * &self.truth.inverse())),
        }
    }
}

impl RevisionProvider for OracleProvider {
    fn revise(&mut self, input: &ProviderInput<'_>) -> Result<ProviderOutput> {
        let (w, h) = (input.induced.width, input.induced.height);
        self.image_truth.same_shape(w, h)?;
        let cfg = &self.config;
        let truth = self.true_targets(input.direction, input.render_pose, input.source);
        let gap = 1.0 + cfg.gap_scale * input.render_pose.rotation_distance(&self.truth);
        let (sx, sy) = (gap * cfg.noise_px / input.grid.fx, gap * cfg.noise_px / input.grid.fy);
        let sd = gap * cfg.depth_noise.unwrap_or(cfg.noise_px / input.grid.fx);

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(Self::stream(input.outer, input.view, input.direction));
        let n = w * h;
        let mut values = vec![Vector3::zeros(); n];
        let mut mask = vec![false; n];
        let mut weights = vec![Vector3::zeros(); n];
        for i in 0..n {
            // fixed number of draws per pixel keeps the pattern independent of masks
            let outlier = rng.random::<f64>() < cfg.outlier_rate;
            let z: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let u: [f64; 3] = std::array::from_fn(|_| rng.random::<f64>());
            if !(input.induced.mask[i] && truth.mask[i]) {
                continue;
            }
            let t = truth.points[i];
            let target = if outlier {
                let n = input.grid.normalize(u[0] * (w as f64 - 1.0), u[1] * (h as f64 - 1.0));
                Vector3::new(n.x, n.y, t.z * (0.5 + u[2]))
            } else {
                t + Vector3::new(sx * z[0], sy * z[1], sd * t.z * z[2])
            };
            values[i] = target - input.induced.points[i];
            mask[i] = true;
            weights[i] = Vector3::repeat(if outlier { cfg.outlier_weight } else { 1.0 });
        }
        Ok(ProviderOutput {
            revision: RevisionField::new(w, h, values, mask)?,
            confidence: ConfidenceField::new(w, h, weights)?,
        })
    }
}

/// Picks the best level-0 correlation offset around each induced
/// correspondence. Features are sinusoidal encodings of object coordinates,
/// computed for the image from the true pose, so matches are unambiguous
/// within the lookup window.
#[derive(Clone, Debug)]
pub struct CorrelationMatchProvider {
    pub truth: RigidTransform,
    pub frequencies: Vec<f64>,
    /// Minimum peak score as a fraction of a perfect match.
    pub min_score: f64,
}

impl CorrelationMatchProvider {
    pub fn new(truth: RigidTransform) -> Self {
        Self {
            truth,
            frequencies: vec![20.0, 50.0, 120.0],
            min_score: 0.5,
        }
    }
}

impl RevisionProvider for CorrelationMatchProvider {
    fn features(&self, view: FeatureView<'_>) -> Option<Result<FeatureMap>> {
        Some(match view {
            FeatureView::Image { depth, grid } => positional_features(depth, grid, &self.truth, &self.frequencies),
            FeatureView::Render { depth, grid, pose } => positional_features(depth, grid, pose, &self.frequencies),
        })
    }

    fn revise(&mut self, input: &ProviderInput<'_>) -> Result<ProviderOutput> {
        let corr = input
            .correlation
            .ok_or_else(|| Error::InvalidArgument("correlation provider ran without correlation features".into()))?;
        let (w, h) = (input.induced.width, input.induced.height);
        let side = 2 * input.correlation_radius + 1;
        let r = input.correlation_radius as f64;
        let perfect = 3.0 * self.frequencies.len() as f64;
        let n = w * h;
        let mut values = vec![Vector3::zeros(); n];
        let mut weights = vec![Vector3::zeros(); n];
        for i in 0..n {
            if !input.induced.mask[i] {
                continue;
            }
            let window = &corr[i * input.correlation_len..i * input.correlation_len + side * side];
            let (best, score) =
                window.iter().enumerate().fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc },
                );
            if score < self.min_score * perfect {
                continue;
            }
            let (dx, dy) = ((best % side) as f64 - r, (best / side) as f64 - r);
            values[i] = Vector3::new(dx / input.grid.fx, dy / input.grid.fy, 0.0);
            weights[i] = Vector3::new(1.0, 1.0, 0.0);
        }
        Ok(ProviderOutput {
            revision: RevisionField::new(w, h, values, input.induced.mask.clone())?,
            confidence: ConfidenceField::new(w, h, weights)?,
        })
    }
}
