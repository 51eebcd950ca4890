//! Core library for batch insertion of textured meshes into calibrated
//! scene videos: geometric placement, pose-refinement stabilization, HDR
//! lighting, soft-shadow ray casting, compositing, a refinement plugin
//! protocol, visual-word retrieval, and distribution metrics.

// Index loops here usually walk several parallel buffers at once.
#![allow(clippy::needless_range_loop)]

pub mod geometry;
pub mod grid;
pub mod lighting;
pub mod matrixio;
pub mod metrics;
pub mod pipeline;
pub mod placement;
pub mod plugin;
pub mod render;
pub mod retrieval;
pub mod scene;
pub mod stabilize;
pub mod style;
pub mod synthetic;

pub use geometry::{CameraPose, Plane};
pub use grid::{ClassGrid, Grid, RgbGrid, ScalarGrid};
pub use lighting::HdrPanorama;
pub use scene::{ObjectMesh, ScenePackage};
