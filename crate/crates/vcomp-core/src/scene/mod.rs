//! Scene package loading, mesh and raster IO, and pipeline output writing.
//!
//! A scene package is a calibrated frame sequence: linearized RGB frames,
//! one shared intrinsics matrix, per-frame poses, metric depth maps, and
//! segmentation masks. The manifest is a single JSON document listing
//! per-frame asset paths; see the repository README for the schema.

pub mod manifest;
pub mod mesh;
pub mod outputs;
pub mod raster;

use std::collections::BTreeMap;

use nalgebra::Matrix3;
use thiserror::Error;

use crate::geometry::CameraPose;
use crate::grid::{ClassGrid, RgbGrid, ScalarGrid};

pub use manifest::{load_scene_package, SceneManifest};
pub use mesh::{load_mesh, save_mesh_obj, ObjectMesh};
pub use outputs::{write_outputs, RunManifest, RunMeta};

#[derive(Debug, Error)]
pub enum SceneIoError {
    #[error("missing asset: {0}")]
    MissingAsset(String),
    #[error("dimension mismatch for {path}: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch {
        path: String,
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("invalid pose for frame {frame}: rotation residual {residual}")]
    InvalidPose { frame: usize, residual: f64 },
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("mesh parse error: {0}")]
    MeshParse(String),
    #[error("degenerate mesh: {degenerate} of {total} triangles have zero area")]
    DegenerateMesh { degenerate: usize, total: usize },
    #[error("unsupported file format: {0}")]
    UnsupportedFormat(String),
    #[error("io error on {0}: {1}")]
    Io(String, String),
    #[error("decode error on {0}: {1}")]
    Decode(String, String),
    #[error("encode error on {0}: {1}")]
    Encode(String, String),
}

/// Calibrated frame sequence plus composition split: the first `n_target`
/// frames receive the object, the trailing `n_reference` frames anchor
/// placement. Immutable after load; safe to share across threads.
#[derive(Debug, Clone)]
pub struct ScenePackage {
    pub frames: Vec<RgbGrid>,
    pub intrinsics: Matrix3<f64>,
    /// World-to-camera poses, one per frame.
    pub poses: Vec<CameraPose>,
    pub depth_maps: Vec<ScalarGrid>,
    pub seg_masks: Vec<ClassGrid>,
    pub frame_rate: f64,
    pub n_target: usize,
    pub n_reference: usize,
    /// Class-name table from the manifest (name -> id).
    pub class_names: BTreeMap<String, u16>,
    pub decode_gamma: f64,
}

impl ScenePackage {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn width(&self) -> usize {
        self.frames.first().map(|f| f.width()).unwrap_or(0)
    }

    pub fn height(&self) -> usize {
        self.frames.first().map(|f| f.height()).unwrap_or(0)
    }

    /// Index of the last reference frame (the placement origin frame).
    pub fn last_frame(&self) -> usize {
        self.frame_count() - 1
    }

    /// Map class names in config to ids via the manifest table.
    pub fn class_ids(&self, names: &[String]) -> Result<Vec<u16>, SceneIoError> {
        names
            .iter()
            .map(|n| {
                self.class_names
                    .get(n)
                    .copied()
                    .or_else(|| n.parse().ok())
                    .ok_or_else(|| SceneIoError::Manifest(format!("unknown class name: {n}")))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), SceneIoError> {
        let total = self.frame_count();
        if self.n_reference < 1 {
            return Err(SceneIoError::Manifest(
                "n_reference must be at least 1".to_string(),
            ));
        }
        if self.n_target + self.n_reference != total {
            return Err(SceneIoError::Manifest(format!(
                "n_target ({}) + n_reference ({}) != frame count ({})",
                self.n_target, self.n_reference, total
            )));
        }
        if self.poses.len() != total
            || self.depth_maps.len() != total
            || self.seg_masks.len() != total
        {
            return Err(SceneIoError::Manifest(
                "per-frame asset counts disagree".to_string(),
            ));
        }
        let (w, h) = (self.width(), self.height());
        for (i, f) in self.frames.iter().enumerate() {
            if f.width() != w || f.height() != h {
                return Err(SceneIoError::DimensionMismatch {
                    path: format!("frame {i}"),
                    expected_w: w,
                    expected_h: h,
                    got_w: f.width(),
                    got_h: f.height(),
                });
            }
        }
        for (i, d) in self.depth_maps.iter().enumerate() {
            if d.width() != w || d.height() != h {
                return Err(SceneIoError::DimensionMismatch {
                    path: format!("depth {i}"),
                    expected_w: w,
                    expected_h: h,
                    got_w: d.width(),
                    got_h: d.height(),
                });
            }
        }
        for (i, m) in self.seg_masks.iter().enumerate() {
            if m.width() != w || m.height() != h {
                return Err(SceneIoError::DimensionMismatch {
                    path: format!("mask {i}"),
                    expected_w: w,
                    expected_h: h,
                    got_w: m.width(),
                    got_h: m.height(),
                });
            }
        }
        for (i, p) in self.poses.iter().enumerate() {
            let residual = crate::geometry::rotation_residual(&p.rotation);
            if residual > crate::geometry::ROTATION_TOL {
                return Err(SceneIoError::InvalidPose { frame: i, residual });
            }
        }
        Ok(())
    }
}
