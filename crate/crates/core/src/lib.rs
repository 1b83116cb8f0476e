//! Bidirectional depth-augmented PnP pose refinement with synthetic
//! revision oracles and symmetry-aware BOP metrics.

pub mod cli;
pub mod correlation;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod refine;
pub mod scene;
pub mod solver;

pub use error::{Error, Result};
