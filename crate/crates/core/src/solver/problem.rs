use serde::{Deserialize, Serialize};

use super::fields::ConfidenceField;
use crate::error::{Error, Result};
use crate::geometry::{CorrespondenceField, RigidTransform};

pub const DEFAULT_DAMPING: f64 = 1e-4;
pub const INFERENCE_ITERATIONS: usize = 10;
pub const TRAINING_ITERATIONS: usize = 3;

/// Which reprojection sums enter the objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionMode {
    #[default]
    Bidirectional,
    /// Only render pixels reprojected into the image (`i → 0`).
    RenderToImage,
    /// Only image pixels reprojected into the renders (`0 → i`).
    ImageToRender,
}

impl DirectionMode {
    pub fn uses(self, d: Direction) -> bool {
        match self {
            DirectionMode::Bidirectional => true,
            DirectionMode::RenderToImage => d == Direction::RenderToImage,
            DirectionMode::ImageToRender => d == Direction::ImageToRender,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    RenderToImage,
    ImageToRender,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub iterations: usize,
    /// Initial Levenberg damping `λ`, applied as `λ·diag(H)`.
    pub damping: f64,
    /// Include the inverse-depth residual channel.
    pub depth_augmented: bool,
    pub direction: DirectionMode,
    /// Reject steps that increase the objective and adapt `λ`.
    pub adaptive_damping: bool,
    /// Stop once `‖δξ‖` falls below this value.
    pub early_exit: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            iterations: INFERENCE_ITERATIONS,
            damping: DEFAULT_DAMPING,
            depth_augmented: true,
            direction: DirectionMode::Bidirectional,
            adaptive_damping: false,
            early_exit: None,
        }
    }
}

impl SolverOptions {
    pub fn training() -> Self {
        Self {
            iterations: TRAINING_ITERATIONS,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("solver needs at least one iteration".into()));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "damping must be finite and ≥ 0, got {}",
                self.damping
            )));
        }
        Ok(())
    }
}

/// Revised targets and their confidences for one direction of one pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionalTerm {
    /// `x′`, in normalized coordinates of the view being reprojected into.
    pub target: CorrespondenceField,
    pub weights: ConfidenceField,
}

/// One rendered view paired with the image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewPair {
    /// Fixed render pose `Gᵢ`.
    pub pose: RigidTransform,
    /// `xᵢ`: the render's own pixels with inverse depth.
    pub render: CorrespondenceField,
    /// Indexed by render pixels; targets live in the image.
    pub render_to_image: DirectionalTerm,
    /// Indexed by image pixels; targets live in render `i`.
    pub image_to_render: DirectionalTerm,
}

/// Everything one solve needs besides the starting pose.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BdpnpProblem {
    /// `x₀`: the image pixels with inverse depth.
    pub image: CorrespondenceField,
    pub views: Vec<ViewPair>,
    pub options: SolverOptions,
}

impl BdpnpProblem {
    /// Checks shapes and option ranges. Weights outside `[0, 1]` are allowed
    /// here and clamped by the solver.
    pub fn new(image: CorrespondenceField, views: Vec<ViewPair>, options: SolverOptions) -> Result<Self> {
        let p = Self { image, views, options };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.options.validate()?;
        if self.views.is_empty() {
            return Err(Error::InvalidArgument(
                "problem needs at least one rendered view".into(),
            ));
        }
        let (w, h) = (self.image.width, self.image.height);
        for (i, v) in self.views.iter().enumerate() {
            let ctx = |e: Error| Error::InvalidArgument(format!("view {i}: {e}"));
            v.render.same_shape(w, h).map_err(ctx)?;
            for t in [&v.render_to_image, &v.image_to_render] {
                t.target.same_shape(w, h).map_err(ctx)?;
                if (t.weights.width, t.weights.height) != (w, h) || t.weights.weights.len() != w * h {
                    return Err(ctx(Error::shape(
                        format!("{w}×{h} weights"),
                        format!("{}×{}", t.weights.width, t.weights.height),
                    )));
                }
            }
            if !v.pose.is_valid(1e-6) {
                return Err(Error::InvalidArgument(format!("view {i}: render pose is not rigid")));
            }
        }
        Ok(())
    }

    /// Channel weights the solver will clamp into `[0, 1]`.
    pub fn clamped_weight_count(&self) -> usize {
        self.views
            .iter()
            .map(|v| v.render_to_image.weights.out_of_range() + v.image_to_render.weights.out_of_range())
            .sum()
    }

    pub fn term(&self, view: usize, dir: Direction) -> &DirectionalTerm {
        match dir {
            Direction::RenderToImage => &self.views[view].render_to_image,
            Direction::ImageToRender => &self.views[view].image_to_render,
        }
    }

    pub fn term_mut(&mut self, view: usize, dir: Direction) -> &mut DirectionalTerm {
        match dir {
            Direction::RenderToImage => &mut self.views[view].render_to_image,
            Direction::ImageToRender => &mut self.views[view].image_to_render,
        }
    }

    /// Multiplies every weight by `c`.
    pub fn with_scaled_weights(&self, c: f64) -> Self {
        let mut p = self.clone();
        for v in &mut p.views {
            v.render_to_image.weights = v.render_to_image.weights.scaled(c);
            v.image_to_render.weights = v.image_to_render.weights.scaled(c);
        }
        p
    }
}
