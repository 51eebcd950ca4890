//! JSON scene manifest and the parallel asset loader behind
//! [`load_scene_package`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::CameraPose;
use crate::scene::{raster, SceneIoError, ScenePackage};

/// Pose convention declared by the manifest. Internally everything is
/// world-to-camera; camera-to-world inputs are inverted on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseConvention {
    CameraToWorld,
    WorldToCamera,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameEntry {
    pub image: String,
    pub depth: String,
    pub mask: String,
    /// Row-major 3x3 rotation.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneManifest {
    pub version: u32,
    pub pose_convention: PoseConvention,
    /// Row-major 3x3 intrinsics in pixels.
    pub intrinsics: [f64; 9],
    pub frame_rate: f64,
    pub n_target: usize,
    pub n_reference: usize,
    #[serde(default = "default_gamma")]
    pub decode_gamma: f64,
    #[serde(default)]
    pub class_names: BTreeMap<String, u16>,
    pub frames: Vec<FrameEntry>,
}

fn default_gamma() -> f64 {
    2.2
}

impl SceneManifest {
    pub fn from_path(path: &Path) -> Result<Self, SceneIoError> {
        if !path.exists() {
            return Err(SceneIoError::MissingAsset(path.display().to_string()));
        }
        let text = fs::read_to_string(path)
            .map_err(|e| SceneIoError::Io(path.display().to_string(), e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| SceneIoError::Manifest(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), SceneIoError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| SceneIoError::Manifest(e.to_string()))?;
        fs::write(path, text)
            .map_err(|e| SceneIoError::Io(path.display().to_string(), e.to_string()))
    }
}

/// Load and validate a scene package from a manifest path. Per-frame assets
/// load in parallel; the result does not depend on scheduling order.
pub fn load_scene_package(manifest_path: &Path) -> Result<ScenePackage, SceneIoError> {
    let manifest = SceneManifest::from_path(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let intrinsics = Matrix3::from_row_slice(&manifest.intrinsics);

    struct FrameAssets {
        image: crate::grid::RgbGrid,
        depth: crate::grid::ScalarGrid,
        mask: crate::grid::ClassGrid,
        pose: CameraPose,
    }

    let loaded: Result<Vec<FrameAssets>, SceneIoError> = manifest
        .frames
        .par_iter()
        .enumerate()
        .map(|(i, entry)| {
            let resolve = |rel: &str| -> PathBuf { base.join(rel) };
            let image = raster::load_image_linear(&resolve(&entry.image), manifest.decode_gamma)?;
            let depth = raster::load_depth(&resolve(&entry.depth))?;
            let mask = raster::load_class_mask(&resolve(&entry.mask))?;
            let rotation = Matrix3::from_row_slice(&entry.rotation);
            let translation = Vector3::from_column_slice(&entry.translation);
            let pose = match manifest.pose_convention {
                PoseConvention::WorldToCamera => CameraPose::new(rotation, translation),
                PoseConvention::CameraToWorld => {
                    CameraPose::from_camera_to_world(rotation, translation)
                }
            }
            .map_err(|e| match e {
                crate::geometry::GeometryError::InvalidRotation { residual, .. } => {
                    SceneIoError::InvalidPose { frame: i, residual }
                }
                other => SceneIoError::Manifest(other.to_string()),
            })?;
            Ok(FrameAssets {
                image,
                depth,
                mask,
                pose,
            })
        })
        .collect();
    let loaded = loaded?;

    let mut frames = Vec::with_capacity(loaded.len());
    let mut depth_maps = Vec::with_capacity(loaded.len());
    let mut seg_masks = Vec::with_capacity(loaded.len());
    let mut poses = Vec::with_capacity(loaded.len());
    for assets in loaded {
        frames.push(assets.image);
        depth_maps.push(assets.depth);
        seg_masks.push(assets.mask);
        poses.push(assets.pose);
    }

    let package = ScenePackage {
        frames,
        intrinsics,
        poses,
        depth_maps,
        seg_masks,
        frame_rate: manifest.frame_rate,
        n_target: manifest.n_target,
        n_reference: manifest.n_reference,
        class_names: manifest.class_names,
        decode_gamma: manifest.decode_gamma,
    };
    package.validate()?;
    Ok(package)
}
