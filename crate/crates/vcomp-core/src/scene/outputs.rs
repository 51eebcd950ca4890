//! Writing composited frames and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::render::CompositeOutput;
use crate::scene::{raster, SceneIoError};

/// Per-frame placement record carried into the run manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub frame: usize,
    pub pixel: [f64; 2],
    pub depth: f64,
    pub visible: bool,
    pub valid_class: bool,
}

/// Run metadata recorded next to the frames.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub config_hash: String,
    pub seed: u64,
    pub encode_gamma: f64,
    pub placement: Vec<PlacementRecord>,
    pub warnings: Vec<String>,
    /// Stage toggles actually in effect (stabilize, shadow, refine, ...).
    pub stages: BTreeMap<String, bool>,
    pub effective_config: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub image: String,
    pub object_mask: String,
    pub shadow_mask: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(flatten)]
    pub meta: RunMeta,
    pub frames: Vec<FrameRecord>,
}

impl RunManifest {
    pub fn from_path(path: &Path) -> Result<Self, SceneIoError> {
        let text = fs::read_to_string(path)
            .map_err(|e| SceneIoError::Io(path.display().to_string(), e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| SceneIoError::Manifest(e.to_string()))
    }
}

/// Write per-frame RGB, object mask, and shadow mask images plus the run
/// manifest. Identical inputs produce byte-identical trees.
pub fn write_outputs(
    out_dir: &Path,
    frames: &[CompositeOutput],
    meta: RunMeta,
) -> Result<PathBuf, SceneIoError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| SceneIoError::Io(out_dir.display().to_string(), e.to_string()))?;

    let mut records = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let image = format!("frame_{i:04}.png");
        let object_mask = format!("object_mask_{i:04}.png");
        let shadow_mask = format!("shadow_mask_{i:04}.png");
        raster::save_image_encoded(&out_dir.join(&image), &frame.rgb, meta.encode_gamma)?;
        raster::save_intensity_mask(&out_dir.join(&object_mask), &frame.object_mask)?;
        raster::save_intensity_mask(&out_dir.join(&shadow_mask), &frame.shadow_mask)?;
        records.push(FrameRecord {
            index: i,
            image,
            object_mask,
            shadow_mask,
        });
    }

    let manifest = RunManifest {
        meta,
        frames: records,
    };
    let manifest_path = out_dir.join("run_manifest.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| SceneIoError::Manifest(e.to_string()))?;
    fs::write(&manifest_path, text)
        .map_err(|e| SceneIoError::Io(manifest_path.display().to_string(), e.to_string()))?;
    Ok(manifest_path)
}
