//! Wildfire-smoke detection research stack: FIgLib-style archive handling,
//! the deterministic tiling/label pipeline, the SmokeyNet model family, and
//! the weighted objective plus evaluation metrics.
//!
//! Everything numeric is generic over the scalar type; see the aliases at
//! the crate root for the common f32 instantiations.

pub mod checkpoint;
pub mod figlib;
pub mod model;
pub mod objective;
pub mod preprocess;

/// f32 instantiations used by the training harness.
pub type Model32 = model::SmokeyNet<f32>;
pub type Image32 = preprocess::ImageBuffer<f32>;
