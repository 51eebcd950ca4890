//! Placement stabilization: corner anchors tracked backward with optical
//! flow from the first reference frame, then per-frame pose re-optimization
//! against the anchors' world points, and finally a rebuilt placement track
//! under the refined poses.

pub mod flow;
pub mod refine;

pub use flow::{estimate_flow, FlowField};
pub use refine::{refine_pose, AnchorObservation, RefineOptions, RefinedPose};

use std::path::Path;

use nalgebra::{Vector2, Vector4};
use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{self, project_homogeneous, CameraPose};
use crate::grid::RgbGrid;
use crate::placement::{build_track_with_poses, PlacementTrack};
use crate::scene::{raster, SceneIoError, ScenePackage};

#[derive(Debug, Error)]
pub enum StabilizeError {
    #[error("need at least {need} alive anchors, got {got}")]
    InsufficientAnchors { got: usize, need: usize },
    #[error("pose refinement hit the iteration cap before converging")]
    NonConvergence { best: Box<RefinedPose> },
    #[error(transparent)]
    Io(#[from] SceneIoError),
}

/// Default number of anchors tracked for stabilization.
pub const DEFAULT_ANCHOR_COUNT: usize = 16;
/// Anchors whose sampled flow confidence drops below this die.
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.05;
/// Pixels from the image border where flow windows clamp and tracking
/// turns unreliable; anchors are neither selected nor tracked there.
pub const DEFAULT_BORDER_MARGIN: f64 = 8.0;

/// World anchor points with their per-frame projected and tracked pixels.
///
/// `projected[n][i]` holds the calibration-predicted pixel of anchor `i` in
/// frame `n` for `n = 0..=n_target` (the extra row is the first reference
/// frame that seeds tracking). `observed` and `alive` cover the target
/// frames only.
#[derive(Debug, Clone)]
pub struct AnchorSet {
    pub world_points: Vec<Vector4<f64>>,
    pub projected: Vec<Vec<Vector2<f64>>>,
    pub observed: Vec<Vec<Vector2<f64>>>,
    pub alive: Vec<Vec<bool>>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.world_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.world_points.is_empty()
    }

    /// Observations usable for refining frame `n`.
    pub fn observations_for_frame(&self, n: usize) -> Vec<AnchorObservation> {
        self.alive[n]
            .iter()
            .enumerate()
            .filter(|(_, alive)| **alive)
            .map(|(i, _)| AnchorObservation {
                world: self.world_points[i],
                pixel: self.observed[n][i],
            })
            .collect()
    }
}

/// Pick anchor world points: the strongest structure-tensor corners inside
/// the allowed classes (with valid depth) of the first reference frame,
/// spaced apart by at least the window width. Corners back-project to
/// world via the depth map; when `near_world` is given, only points within
/// `max_distance` meters of it qualify, which keeps anchors in the
/// placement region and off the horizon where flow cannot track them.
pub fn select_anchors(
    scene: &ScenePackage,
    allowed: &[u16],
    count: usize,
    near_world: Option<&nalgebra::Vector3<f64>>,
    max_distance: f64,
    window: usize,
) -> Result<AnchorSet, StabilizeError> {
    let frame_idx = scene.n_target; // first reference frame
    let gray = scene.frames[frame_idx].luminance();
    let depth = &scene.depth_maps[frame_idx];
    let mask = &scene.seg_masks[frame_idx];
    let (w, h) = (gray.width(), gray.height());
    let radius = (window / 2).max(1);

    // Gradients once, then windowed min-eigenvalue per candidate pixel.
    let mut gx = vec![0.0f64; w * h];
    let mut gy = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(h - 1);
            gx[y * w + x] = 0.5 * (*gray.get(xp, y) as f64 - *gray.get(xm, y) as f64);
            gy[y * w + x] = 0.5 * (*gray.get(x, yp) as f64 - *gray.get(x, ym) as f64);
        }
    }
    let strength = |x: usize, y: usize| -> f64 {
        let mut g11 = 0.0;
        let mut g12 = 0.0;
        let mut g22 = 0.0;
        for sy in y.saturating_sub(radius)..=(y + radius).min(h - 1) {
            for sx in x.saturating_sub(radius)..=(x + radius).min(w - 1) {
                let ix = gx[sy * w + sx];
                let iy = gy[sy * w + sx];
                g11 += ix * ix;
                g12 += ix * iy;
                g22 += iy * iy;
            }
        }
        let trace = g11 + g22;
        let split = ((g11 - g22) * (g11 - g22) + 4.0 * g12 * g12).sqrt();
        0.5 * (trace - split).max(0.0)
    };

    let border = (DEFAULT_BORDER_MARGIN as usize).max(radius);
    if h <= 2 * border || w <= 2 * border {
        return Err(StabilizeError::InsufficientAnchors { got: 0, need: 4 });
    }
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for y in border..h - border {
        for x in border..w - border {
            if !allowed.contains(mask.get(x, y)) || *depth.get(x, y) <= 0.0 {
                continue;
            }
            if let Some(near) = near_world {
                let z = *depth.get(x, y) as f64;
                let world = geometry::backproject_pixel_world(
                    &scene.intrinsics,
                    &scene.poses[frame_idx],
                    x as f64,
                    y as f64,
                    z,
                );
                if (world - near).norm() > max_distance {
                    continue;
                }
            }
            let s = strength(x, y);
            if s > 0.0 {
                candidates.push((s, x, y));
            }
        }
    }
    // Strongest first; raster order breaks ties.
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| (a.2, a.1).cmp(&(b.2, b.1)))
    });
    let spacing = (window as f64).max(4.0);
    let mut picked: Vec<(usize, usize)> = Vec::new();
    for (_, x, y) in candidates {
        if picked.len() >= count {
            break;
        }
        let far_enough = picked.iter().all(|(px, py)| {
            let dx = *px as f64 - x as f64;
            let dy = *py as f64 - y as f64;
            (dx * dx + dy * dy).sqrt() >= spacing
        });
        if far_enough {
            picked.push((x, y));
        }
    }
    if picked.len() < 4 {
        return Err(StabilizeError::InsufficientAnchors {
            got: picked.len(),
            need: 4,
        });
    }

    let world_points: Vec<Vector4<f64>> = picked
        .iter()
        .map(|&(x, y)| {
            let z = *depth.get(x, y) as f64;
            let p = geometry::backproject_pixel_world(
                &scene.intrinsics,
                &scene.poses[frame_idx],
                x as f64,
                y as f64,
                z,
            );
            Vector4::new(p.x, p.y, p.z, 1.0)
        })
        .collect();

    Ok(project_anchor_set(scene, world_points))
}

/// Populate the calibration-predicted pixels for frames `0..=n_target`.
fn project_anchor_set(scene: &ScenePackage, world_points: Vec<Vector4<f64>>) -> AnchorSet {
    let n = scene.n_target;
    let projected: Vec<Vec<Vector2<f64>>> = (0..=n)
        .map(|frame| {
            world_points
                .iter()
                .map(|wp| project_homogeneous(&scene.intrinsics, &scene.poses[frame], wp).0)
                .collect()
        })
        .collect();
    let observed = vec![vec![Vector2::zeros(); world_points.len()]; n];
    let alive = vec![vec![false; world_points.len()]; n];
    AnchorSet {
        world_points,
        projected,
        observed,
        alive,
    }
}

/// Build an anchor set directly from known world points (flow files or
/// synthetic tests).
pub fn anchor_set_from_world_points(
    scene: &ScenePackage,
    world_points: Vec<Vector4<f64>>,
) -> AnchorSet {
    project_anchor_set(scene, world_points)
}

/// Chain tracked pixels backward from the first reference frame.
///
/// `flows[n]` must carry the flow from frame `n+1` to frame `n`. Starting
/// at the calibration-predicted pixel in the reference frame, each anchor's
/// position warps backward one pair at a time; an anchor leaving the image
/// or landing on flow confidence below `confidence_threshold` dies from
/// that frame backward.
pub fn track_anchors(
    scene: &ScenePackage,
    mut anchors: AnchorSet,
    flows: &[FlowField],
    confidence_threshold: f64,
) -> AnchorSet {
    let n = scene.n_target;
    assert_eq!(flows.len(), n, "need one flow field per consecutive pair");
    let (w, h) = (scene.width() as f64, scene.height() as f64);
    let m = DEFAULT_BORDER_MARGIN.min((w - 1.0) / 2.0).min((h - 1.0) / 2.0);
    let in_bounds =
        |p: &Vector2<f64>| p.x >= m && p.y >= m && p.x <= w - 1.0 - m && p.y <= h - 1.0 - m;

    for i in 0..anchors.len() {
        let mut pos = anchors.projected[n][i];
        let mut alive = in_bounds(&pos);
        for frame in (0..n).rev() {
            if alive {
                let flow = &flows[frame];
                let conf = flow.sample_confidence(pos.x, pos.y);
                let (dx, dy) = flow.sample(pos.x, pos.y);
                let next = Vector2::new(pos.x + dx, pos.y + dy);
                if conf < confidence_threshold || !in_bounds(&next) {
                    alive = false;
                } else {
                    pos = next;
                }
            }
            anchors.observed[frame][i] = pos;
            anchors.alive[frame][i] = alive;
        }
    }
    anchors
}

/// Per-frame outcome of the pose refinement.
#[derive(Debug, Clone)]
pub struct FrameDiagnostic {
    pub frame: usize,
    pub anchors_used: usize,
    pub rms_before: f64,
    pub rms_after: f64,
    pub refined: bool,
}

#[derive(Debug, Clone)]
pub struct StabilizedTrack {
    pub track: PlacementTrack,
    pub poses: Vec<CameraPose>,
    pub diagnostics: Vec<FrameDiagnostic>,
    pub warnings: Vec<String>,
}

/// Re-optimize every target frame's pose against the tracked anchors and
/// rebuild the placement track. Frames whose refinement fails keep their
/// original pose and record a warning.
pub fn stabilize_track(
    scene: &ScenePackage,
    track: &PlacementTrack,
    anchors: &AnchorSet,
    allowed: &[u16],
    opts: &RefineOptions,
) -> StabilizedTrack {
    let results: Vec<(CameraPose, FrameDiagnostic, Option<String>)> = (0..scene.n_target)
        .into_par_iter()
        .map(|frame| {
            let observations = anchors.observations_for_frame(frame);
            let init = &scene.poses[frame];
            let rms_before = if observations.is_empty() {
                0.0
            } else {
                (observations
                    .iter()
                    .map(|o| {
                        let (p, _) = project_homogeneous(&scene.intrinsics, init, &o.world);
                        (o.pixel - p).norm_squared()
                    })
                    .sum::<f64>()
                    / observations.len() as f64)
                    .sqrt()
            };
            match refine_pose(&scene.intrinsics, &observations, init, opts) {
                Ok(refined) => (
                    refined.pose.clone(),
                    FrameDiagnostic {
                        frame,
                        anchors_used: observations.len(),
                        rms_before,
                        rms_after: refined.rms_reprojection,
                        refined: true,
                    },
                    None,
                ),
                Err(StabilizeError::NonConvergence { best }) => {
                    let warn = format!(
                        "frame {frame}: refinement stopped at the iteration cap (rms {:.3} px)",
                        best.rms_reprojection
                    );
                    (
                        best.pose.clone(),
                        FrameDiagnostic {
                            frame,
                            anchors_used: observations.len(),
                            rms_before,
                            rms_after: best.rms_reprojection,
                            refined: true,
                        },
                        Some(warn),
                    )
                }
                Err(err) => (
                    init.clone(),
                    FrameDiagnostic {
                        frame,
                        anchors_used: observations.len(),
                        rms_before,
                        rms_after: rms_before,
                        refined: false,
                    },
                    Some(format!("frame {frame}: {err}; keeping original pose")),
                ),
            }
        })
        .collect();

    let mut poses = Vec::with_capacity(results.len());
    let mut diagnostics = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    for (pose, diag, warn) in results {
        poses.push(pose);
        diagnostics.push(diag);
        if let Some(w) = warn {
            warnings.push(w);
        }
    }
    let new_track = build_track_with_poses(scene, &track.anchor_world, &poses, allowed);
    StabilizedTrack {
        track: new_track,
        poses,
        diagnostics,
        warnings,
    }
}

/// Estimate all consecutive-pair flows needed by [`track_anchors`]:
/// element `n` maps frame `n+1` onto frame `n`. Runs pairs in parallel.
pub fn consecutive_flows(scene: &ScenePackage, levels: usize, window: usize) -> Vec<FlowField> {
    (0..scene.n_target)
        .into_par_iter()
        .map(|n| {
            estimate_flow(&scene.frames[n + 1], &scene.frames[n], levels, window)
                .with_pair(n + 1, n)
        })
        .collect()
}

/// Load precomputed flow files following the `flow_{n}_{n+1}` naming
/// convention: color PFM rasters carrying (dx, dy, confidence). The stored
/// field must map frame `n+1` onto frame `n`.
pub fn load_flow_files(dir: &Path, n_target: usize) -> Result<Vec<FlowField>, StabilizeError> {
    (0..n_target)
        .map(|n| {
            let path = dir.join(format!("flow_{}_{}.pfm", n, n + 1));
            let rgb = raster::load_pfm_rgb(&path)?;
            Ok(FlowField {
                dx: rgb.map(|p| p[0]),
                dy: rgb.map(|p| p[1]),
                confidence: rgb.map(|p| p[2].clamp(0.0, 1.0)),
                frame_a: n + 1,
                frame_b: n,
            })
        })
        .collect()
}

/// Write flow fields with the same convention (dx, dy, confidence).
pub fn save_flow_files(dir: &Path, flows: &[FlowField]) -> Result<(), StabilizeError> {
    for (n, flow) in flows.iter().enumerate() {
        let path = dir.join(format!("flow_{}_{}.pfm", n, n + 1));
        let rgb = crate::grid::RgbGrid::from_fn(flow.width(), flow.height(), |x, y| {
            [
                *flow.dx.get(x, y),
                *flow.dy.get(x, y),
                *flow.confidence.get(x, y),
            ]
        });
        raster::save_pfm_rgb(&path, &rgb)?;
    }
    Ok(())
}

/// Synthetic zero flow with the given confidence (tests and degenerate
/// single-pair scenes).
pub fn constant_flow(width: usize, height: usize, dx: f32, dy: f32, confidence: f32) -> FlowField {
    FlowField {
        dx: crate::grid::ScalarGrid::new_filled(width, height, dx),
        dy: crate::grid::ScalarGrid::new_filled(width, height, dy),
        confidence: crate::grid::ScalarGrid::new_filled(width, height, confidence),
        frame_a: 0,
        frame_b: 0,
    }
}

/// Hook for callers that ingest frames without a scene package.
pub fn estimate_flow_rgb(a: &RgbGrid, b: &RgbGrid, levels: usize, window: usize) -> FlowField {
    estimate_flow(a, b, levels, window)
}
