//! Training losses on correspondence fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CorrespondenceField;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowLoss {
    /// Mean `|Δx| + |Δy|` over the mask.
    pub endpoint: f64,
    /// Mean `|Δd|` of the inverse-depth channel, kept apart.
    pub inverse_depth: f64,
    pub pixels: usize,
}

/// L1 endpoint error between revised and true correspondences over `mask`
/// (intersected with both fields' masks).
pub fn flow_loss(revised: &CorrespondenceField, truth: &CorrespondenceField, mask: &[bool]) -> Result<FlowLoss> {
    truth.same_shape(revised.width, revised.height)?;
    if mask.len() != revised.len() {
        return Err(Error::shape(revised.len(), mask.len()));
    }
    let (mut e, mut d, mut n) = (0.0, 0.0, 0usize);
    for i in 0..revised.len() {
        if !(mask[i] && revised.mask[i] && truth.mask[i]) {
            continue;
        }
        let diff = revised.points[i] - truth.points[i];
        e += diff.x.abs() + diff.y.abs();
        d += diff.z.abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("flow loss mask".into()));
    }
    Ok(FlowLoss {
        endpoint: e / n as f64,
        inverse_depth: d / n as f64,
        pixels: n,
    })
}
