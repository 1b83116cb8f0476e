use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, ScalarField};

/// Per-pixel depth in meters, row-major. Zero means "no surface".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::shape(format!("{}", width * height), values.len()));
        }
        if let Some(bad) = values.iter().find(|z| !(z.is_finite() && **z >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "depth must be finite and nonnegative, got {bad}"
            )));
        }
        Ok(Self { width, height, values })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn check_shape(&self, k: &Intrinsics) -> Result<()> {
        if self.width != k.width || self.height != k.height {
            return Err(Error::shape(
                format!("{}×{} (intrinsics)", k.width, k.height),
                format!("{}×{} (depth)", self.width, self.height),
            ));
        }
        Ok(())
    }

    pub fn mask(&self) -> Vec<bool> {
        self.values.iter().map(|&z| z > 0.0).collect()
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&z| z > 0.0).count()
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width + u]
    }

    /// Keeps every `factor`-th pixel in both directions.
    pub fn subsample(&self, factor: usize) -> Self {
        let (w, h) = (self.width / factor, self.height / factor);
        let mut values = Vec::with_capacity(w * h);
        for v in 0..h {
            for u in 0..w {
                values.push(self.get(u * factor, v * factor));
            }
        }
        Self {
            width: w,
            height: h,
            values,
        }
    }

    /// `1/Z` with the validity mask.
    pub fn inverse_depth(&self) -> ScalarField {
        ScalarField {
            width: self.width,
            height: self.height,
            values: self
                .values
                .iter()
                .map(|&z| if z > 0.0 { 1.0 / z } else { 0.0 })
                .collect(),
            mask: self.mask(),
        }
    }

    /// Rounds every value through `f32`, the on-disk precision.
    pub fn quantized(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&z| z as f32 as f64).collect(),
        }
    }

    /// Raw little-endian `f32`, row-major.
    pub fn to_f32_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|&z| (z as f32).to_le_bytes()).collect()
    }

    pub fn from_f32_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 4 {
            return Err(Error::shape(
                format!("{} bytes ({width}×{height} f32)", width * height * 4),
                format!("{} bytes", bytes.len()),
            ));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Self::new(width, height, values)
    }
}
