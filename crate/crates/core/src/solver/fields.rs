use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CorrespondenceField;

/// Upper bound of confidence weights; larger inputs are clamped.
pub const W_MAX: f64 = 1.0;

/// Per-pixel weights for the `(x, y, inverse depth)` residual channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceField {
    pub width: usize,
    pub height: usize,
    pub weights: Vec<Vector3<f64>>,
}

impl ConfidenceField {
    pub fn constant(width: usize, height: usize, w: f64) -> Self {
        Self {
            width,
            height,
            weights: vec![Vector3::repeat(w); width * height],
        }
    }

    pub fn new(width: usize, height: usize, weights: Vec<Vector3<f64>>) -> Result<Self> {
        if weights.len() != width * height {
            return Err(Error::shape(format!("{} weights", width * height), weights.len()));
        }
        if weights.iter().flat_map(|w| w.iter()).any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("confidence weights must be finite".into()));
        }
        Ok(Self { width, height, weights })
    }

    /// Number of channel weights outside `[0, W_MAX]`.
    pub fn out_of_range(&self) -> usize {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .filter(|&&w| !(0.0..=W_MAX).contains(&w))
            .count()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            weights: self.weights.iter().map(|w| w * c).collect(),
        }
    }
}

/// Weight actually used by the solver.
#[inline]
pub fn effective_weight(w: f64) -> f64 {
    w.clamp(0.0, W_MAX)
}

/// Additive per-pixel corrections to a correspondence field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevisionField {
    pub width: usize,
    pub height: usize,
    pub values: Vec<Vector3<f64>>,
    pub mask: Vec<bool>,
}

impl RevisionField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![Vector3::zeros(); width * height],
            mask: vec![true; width * height],
        }
    }

    /// Zeroes masked-out entries.
    pub fn new(width: usize, height: usize, values: Vec<Vector3<f64>>, mask: Vec<bool>) -> Result<Self> {
        let n = width * height;
        if values.len() != n || mask.len() != n {
            return Err(Error::shape(
                format!("{n} entries"),
                format!("{} values / {} mask", values.len(), mask.len()),
            ));
        }
        if values.iter().flat_map(|v| v.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("revisions must be finite".into()));
        }
        let values = values
            .into_iter()
            .zip(&mask)
            .map(|(v, &m)| if m { v } else { Vector3::zeros() })
            .collect();
        Ok(Self {
            width,
            height,
            values,
            mask,
        })
    }

    pub fn negated(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| -v).collect(),
            mask: self.mask.clone(),
        }
    }
}

/// `x′ = x + r`, valid where both are.
pub fn apply_revisions(x: &CorrespondenceField, r: &RevisionField) -> Result<CorrespondenceField> {
    x.same_shape(r.width, r.height)?;
    let mask: Vec<bool> = x.mask.iter().zip(&r.mask).map(|(a, b)| *a && *b).collect();
    let points = x
        .points
        .iter()
        .zip(&r.values)
        .zip(&mask)
        .map(|((p, d), &m)| if m { p + d } else { Vector3::zeros() })
        .collect();
    CorrespondenceField::from_parts(x.width, x.height, points, mask)
}
