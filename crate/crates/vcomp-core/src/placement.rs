//! Object anchor selection and the raw per-frame placement track.
//!
//! The anchor strategy follows the reference camera: the object sits at the
//! camera center of the last frame, dropped onto the fitted ground plane so
//! it does not float at camera height. A mask-region strategy picks the
//! depth-backed pixel deepest inside the allowed segmentation classes
//! instead.

use nalgebra::{Matrix3, Vector2, Vector3, Vector4};
use thiserror::Error;

use crate::geometry::{
    self, fit_plane, project_homogeneous, CameraPose, GeometryError, Plane,
};
use crate::grid::{ClassGrid, ScalarGrid};
use crate::scene::ScenePackage;

#[derive(Debug, Error)]
pub enum PlacementError {
    #[error("no allowed pixel with valid depth in the placement frame")]
    NoPlaceableRegion,
    #[error("ground plane fit failed: {0}")]
    PlaneFitFailed(#[from] GeometryError),
}

/// How the world anchor is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementStrategy {
    /// Camera center of the last reference frame, dropped to the ground plane.
    FutureCamera,
    /// Depth-back-projected pixel maximizing distance to the allowed-region
    /// boundary in the last target frame.
    MaskRegion,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackEntry {
    pub pixel: Vector2<f64>,
    pub depth: f64,
    pub visible: bool,
    pub valid_class: bool,
}

/// Anchor plus its projection into every target frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementTrack {
    pub anchor_world: Vector4<f64>,
    pub entries: Vec<TrackEntry>,
}

/// True iff the rounded pixel lies inside the grid and its class id is
/// allowed. Out-of-bounds pixels are never valid.
pub fn occlusion_check(mask: &ClassGrid, pixel: &Vector2<f64>, allowed: &[u16]) -> bool {
    let x = pixel.x.round() as i64;
    let y = pixel.y.round() as i64;
    if !mask.in_bounds(x, y) {
        return false;
    }
    allowed.contains(mask.get(x as usize, y as usize))
}

/// Fit the ground plane from allowed-class, valid-depth pixels of one frame,
/// oriented so the mean camera center lies on its positive side.
pub fn fit_ground_plane(
    scene: &ScenePackage,
    frame: usize,
    allowed: &[u16],
    stride: usize,
) -> Result<Plane, PlacementError> {
    let depth = &scene.depth_maps[frame];
    let mask = &scene.seg_masks[frame];
    let pose = &scene.poses[frame];
    let k_inv = scene
        .intrinsics
        .try_inverse()
        .expect("intrinsics must be invertible");
    let r_inv = pose.rotation.transpose();

    let mut points = Vec::new();
    for y in (0..depth.height()).step_by(stride) {
        for x in (0..depth.width()).step_by(stride) {
            let z = *depth.get(x, y) as f64;
            if z <= 0.0 || !allowed.contains(mask.get(x, y)) {
                continue;
            }
            let ray = k_inv * Vector3::new(x as f64, y as f64, 1.0);
            let cam = ray * (z / ray.z);
            points.push(r_inv * (cam - pose.translation));
        }
    }
    if points.len() < 3 {
        return Err(PlacementError::NoPlaceableRegion);
    }
    let plane = fit_plane(&points)?;
    let mean_center = scene
        .poses
        .iter()
        .map(|p| p.camera_center())
        .sum::<Vector3<f64>>()
        / scene.poses.len() as f64;
    Ok(plane.oriented_toward(&mean_center))
}

/// Choose the object's world anchor (homogeneous).
pub fn select_placement_point(
    scene: &ScenePackage,
    strategy: PlacementStrategy,
    allowed: &[u16],
) -> Result<Vector4<f64>, PlacementError> {
    match strategy {
        PlacementStrategy::FutureCamera => {
            let plane = fit_ground_plane(scene, scene.n_target - 1, allowed, 1)?;
            let cam = scene.poses[scene.last_frame()].camera_center();
            let grounded = plane.project_point(&cam);
            Ok(Vector4::new(grounded.x, grounded.y, grounded.z, 1.0))
        }
        PlacementStrategy::MaskRegion => {
            let frame = scene.n_target - 1;
            let mask = &scene.seg_masks[frame];
            let depth = &scene.depth_maps[frame];
            let allowed_grid =
                crate::grid::Grid::from_fn(mask.width(), mask.height(), |x, y| {
                    allowed.contains(mask.get(x, y))
                });
            let dist = distance_to_boundary(&allowed_grid);
            let mut best: Option<(f32, usize, usize)> = None;
            for y in 0..mask.height() {
                for x in 0..mask.width() {
                    let d = *dist.get(x, y);
                    if d <= 0.0 || *depth.get(x, y) <= 0.0 {
                        continue;
                    }
                    // Strict comparison keeps the first maximum in raster order.
                    if best.map(|(bd, _, _)| d > bd).unwrap_or(true) {
                        best = Some((d, x, y));
                    }
                }
            }
            let (_, x, y) = best.ok_or(PlacementError::NoPlaceableRegion)?;
            let z = *depth.get(x, y) as f64;
            let world = geometry::backproject_pixel_world(
                &scene.intrinsics,
                &scene.poses[frame],
                x as f64,
                y as f64,
                z,
            );
            Ok(Vector4::new(world.x, world.y, world.z, 1.0))
        }
    }
}

/// Project the anchor into every target frame and record visibility and
/// class validity.
pub fn build_track(
    scene: &ScenePackage,
    anchor_world: &Vector4<f64>,
    allowed: &[u16],
) -> PlacementTrack {
    let entries = (0..scene.n_target)
        .map(|n| {
            let (pixel, depth) =
                project_homogeneous(&scene.intrinsics, &scene.poses[n], anchor_world);
            let visible = depth > 0.0;
            let valid_class = visible && occlusion_check(&scene.seg_masks[n], &pixel, allowed);
            TrackEntry {
                pixel,
                depth,
                visible,
                valid_class,
            }
        })
        .collect();
    PlacementTrack {
        anchor_world: *anchor_world,
        entries,
    }
}

/// Rebuild a track against replacement poses (used after stabilization).
pub fn build_track_with_poses(
    scene: &ScenePackage,
    anchor_world: &Vector4<f64>,
    poses: &[CameraPose],
    allowed: &[u16],
) -> PlacementTrack {
    let entries = (0..scene.n_target)
        .map(|n| {
            let (pixel, depth) = project_homogeneous(&scene.intrinsics, &poses[n], anchor_world);
            let visible = depth > 0.0;
            let valid_class = visible && occlusion_check(&scene.seg_masks[n], &pixel, allowed);
            TrackEntry {
                pixel,
                depth,
                visible,
                valid_class,
            }
        })
        .collect();
    PlacementTrack {
        anchor_world: *anchor_world,
        entries,
    }
}

/// Object-to-world pose at the anchor: local +z aligned with the plane
/// normal (sky side), local +x along `heading` projected into the plane,
/// then rotated by `yaw` about the normal, translated to the anchor lifted
/// by `ground_offset` along the normal.
pub fn object_pose_at_anchor(
    plane: &Plane,
    anchor: &Vector3<f64>,
    heading: &Vector3<f64>,
    yaw: f64,
    ground_offset: f64,
) -> (Matrix3<f64>, Vector3<f64>) {
    let up = plane.normal;
    let mut fwd = heading - up * heading.dot(&up);
    if fwd.norm() < 1e-9 {
        // Heading parallel to the normal; fall back to any in-plane axis.
        let probe = if up.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        fwd = probe - up * probe.dot(&up);
    }
    let fwd = fwd.normalize();
    let (sin_y, cos_y) = yaw.sin_cos();
    let side = up.cross(&fwd);
    let fwd_rot = fwd * cos_y + side * sin_y;
    let side_rot = up.cross(&fwd_rot);
    let rotation = Matrix3::from_columns(&[fwd_rot, side_rot, up]);
    let translation = anchor + up * ground_offset;
    (rotation, translation)
}

/// Exact Euclidean distance from each allowed pixel to the region boundary.
/// Pixels outside the image count as boundary; non-allowed pixels get 0.
pub fn distance_to_boundary(allowed: &crate::grid::Grid<bool>) -> ScalarGrid {
    let (w, h) = (allowed.width(), allowed.height());
    // Embed in a one-pixel non-allowed border so the image edge is boundary.
    let (pw, ph) = (w + 2, h + 2);
    let mut sq = vec![0.0f64; pw * ph];
    for y in 0..h {
        for x in 0..w {
            if *allowed.get(x, y) {
                sq[(y + 1) * pw + (x + 1)] = f64::INFINITY;
            }
        }
    }
    // Felzenszwalb-Huttenlocher separable squared distance transform.
    let mut column = vec![0.0f64; ph.max(pw)];
    for x in 0..pw {
        for y in 0..ph {
            column[y] = sq[y * pw + x];
        }
        let out = edt_1d(&column[..ph]);
        for y in 0..ph {
            sq[y * pw + x] = out[y];
        }
    }
    let mut row = vec![0.0f64; pw];
    for y in 0..ph {
        row.copy_from_slice(&sq[y * pw..(y + 1) * pw]);
        let out = edt_1d(&row);
        sq[y * pw..(y + 1) * pw].copy_from_slice(&out);
    }
    ScalarGrid::from_fn(w, h, |x, y| (sq[(y + 1) * pw + (x + 1)]).sqrt() as f32)
}

/// 1-D squared distance transform under the parabola lower envelope.
fn edt_1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        if f[q] == f64::INFINITY {
            continue;
        }
        loop {
            let p = v[k];
            if f[p] == f64::INFINITY {
                // Previous vertex cannot bound anything; replace it.
                if k == 0 {
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
                continue;
            }
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64))
                / (2.0 * q as f64 - 2.0 * p as f64);
            if s <= z[k] {
                if k == 0 {
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut out = vec![0.0f64; n];
    let mut k = 0usize;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        out[q] = if f[p] == f64::INFINITY {
            f64::INFINITY
        } else {
            let d = q as f64 - p as f64;
            d * d + f[p]
        };
    }
    out
}
