//! Self-contained synthetic scene: a textured ground plane observed by a
//! forward-moving camera, rendered analytically so frames, depth maps, and
//! masks stay geometrically consistent for any pose. Used by the demo
//! pipeline, examples, and the test suites.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};

use crate::geometry::CameraPose;
use crate::grid::{ClassGrid, RgbGrid, ScalarGrid};
use crate::scene::manifest::{FrameEntry, PoseConvention, SceneManifest};
use crate::scene::{raster, SceneIoError, ScenePackage};

pub const ROAD_CLASS: u16 = 7;
pub const SKY_CLASS: u16 = 0;

#[derive(Debug, Clone)]
pub struct SyntheticSceneSpec {
    pub width: usize,
    pub height: usize,
    pub n_target: usize,
    pub n_reference: usize,
    pub camera_height: f64,
    /// Forward motion per frame, meters along +x.
    pub step: f64,
    /// Downward camera tilt, radians.
    pub tilt: f64,
    pub frame_rate: f64,
    pub focal: f64,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        // The reference horizon is long enough that the future-camera
        // anchor stays inside every target frame's field of view, and the
        // per-pair motion stays small enough for reliable flow tracking.
        Self {
            width: 96,
            height: 72,
            n_target: 5,
            n_reference: 8,
            camera_height: 1.2,
            step: 0.15,
            tilt: 0.45,
            frame_rate: 10.0,
            focal: 80.0,
        }
    }
}

impl SyntheticSceneSpec {
    pub fn frame_count(&self) -> usize {
        self.n_target + self.n_reference
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.focal,
            0.0,
            self.width as f64 / 2.0,
            0.0,
            self.focal,
            self.height as f64 / 2.0,
            0.0,
            0.0,
            1.0,
        )
    }

    /// World-to-camera pose of frame `i`: camera at `(i * step, 0, h)`,
    /// looking along +x, tilted down.
    pub fn pose(&self, i: usize) -> CameraPose {
        let center = Vector3::new(i as f64 * self.step, 0.0, self.camera_height);
        let forward = Vector3::new(self.tilt.cos(), 0.0, -self.tilt.sin());
        look_pose(&center, &forward)
    }

    pub fn poses(&self) -> Vec<CameraPose> {
        (0..self.frame_count()).map(|i| self.pose(i)).collect()
    }
}

/// Camera at `center` with viewing direction `forward` (world z up,
/// image y pointing toward the ground).
pub fn look_pose(center: &Vector3<f64>, forward: &Vector3<f64>) -> CameraPose {
    let z_cam = forward.normalize();
    let world_up = Vector3::z();
    let x_cam = z_cam.cross(&world_up).normalize();
    let y_cam = z_cam.cross(&x_cam);
    let r_cw = Matrix3::from_columns(&[x_cam, y_cam, z_cam]);
    CameraPose::from_camera_to_world(r_cw, *center).expect("orthonormal look pose")
}

/// Smooth high-texture albedo of the ground at world (x, y).
fn ground_color(x: f64, y: f64) -> [f32; 3] {
    let t = 0.45
        + 0.17 * (3.1 * x).sin() * (2.3 * y).cos()
        + 0.13 * (1.3 * x + 1.9 * y).sin()
        + 0.1 * (2.7 * x - 0.9 * y).cos()
        + 0.1 * (5.3 * x + 1.4 * (2.1 * y).sin()).sin() * (4.7 * y).cos();
    let t = t.clamp(0.02, 0.98);
    // Lane-marking stripe adds structure away from the centerline.
    let stripe = if (y.abs() - 1.2).abs() < 0.06 { 0.35 } else { 0.0 };
    [
        (t + stripe).min(1.0) as f32,
        (t * 0.92 + stripe).min(1.0) as f32,
        (t * 0.85 + stripe * 0.6).min(1.0) as f32,
    ]
}

fn sky_color(dir: &Vector3<f64>) -> [f32; 3] {
    let elevation = dir.z.clamp(0.0, 1.0);
    [
        (0.18 + 0.1 * elevation) as f32,
        (0.24 + 0.14 * elevation) as f32,
        (0.38 + 0.22 * elevation) as f32,
    ]
}

/// Render one frame analytically from a pose: ground-plane color below the
/// horizon, sky gradient above; depth 0 marks sky. Color supersamples a
/// 4x4 subpixel grid so far-field texture integrates over the pixel
/// footprint the way a real camera would instead of aliasing; depth and
/// class come from the pixel center.
pub fn render_frame(
    spec: &SyntheticSceneSpec,
    pose: &CameraPose,
) -> (RgbGrid, ScalarGrid, ClassGrid) {
    let k_inv = spec.intrinsics().try_inverse().expect("intrinsics");
    let r_wc = pose.rotation.transpose();
    let origin = pose.camera_center();
    let mut image = RgbGrid::new_filled(spec.width, spec.height, [0.0; 3]);
    let mut depth = ScalarGrid::new_filled(spec.width, spec.height, 0.0);
    let mut mask = ClassGrid::new_filled(spec.width, spec.height, SKY_CLASS);
    const SS: usize = 4;
    for y in 0..spec.height {
        for x in 0..spec.width {
            let mut acc = [0.0f64; 3];
            for sy in 0..SS {
                for sx in 0..SS {
                    let px = x as f64 + (sx as f64 + 0.5) / SS as f64 - 0.5;
                    let py = y as f64 + (sy as f64 + 0.5) / SS as f64 - 0.5;
                    let dir = (r_wc * (k_inv * Vector3::new(px, py, 1.0))).normalize();
                    let c = if dir.z < -1e-6 {
                        let t = -origin.z / dir.z;
                        let hit = origin + dir * t;
                        ground_color(hit.x, hit.y)
                    } else {
                        sky_color(&dir)
                    };
                    for ch in 0..3 {
                        acc[ch] += c[ch] as f64;
                    }
                }
            }
            let inv = 1.0 / (SS * SS) as f64;
            image.set(
                x,
                y,
                [
                    (acc[0] * inv) as f32,
                    (acc[1] * inv) as f32,
                    (acc[2] * inv) as f32,
                ],
            );
            let dir = (r_wc * (k_inv * Vector3::new(x as f64, y as f64, 1.0))).normalize();
            if dir.z < -1e-6 {
                let t = -origin.z / dir.z;
                let hit = origin + dir * t;
                let cam_z = (pose.rotation * hit + pose.translation).z;
                depth.set(x, y, cam_z as f32);
                mask.set(x, y, ROAD_CLASS);
            }
        }
    }
    (image, depth, mask)
}

/// In-memory scene package. Frames render from `render_poses` (or the
/// spec's true trajectory); the package carries `manifest_poses` when
/// given, which lets tests hand the pipeline jittered calibration while
/// the pixels stay consistent with the true motion.
pub fn build_scene(
    spec: &SyntheticSceneSpec,
    manifest_poses: Option<Vec<CameraPose>>,
) -> ScenePackage {
    let true_poses = spec.poses();
    let mut frames = Vec::with_capacity(spec.frame_count());
    let mut depths = Vec::with_capacity(spec.frame_count());
    let mut masks = Vec::with_capacity(spec.frame_count());
    for pose in &true_poses {
        let (img, depth, mask) = render_frame(spec, pose);
        frames.push(img);
        depths.push(depth);
        masks.push(mask);
    }
    let poses = manifest_poses.unwrap_or(true_poses);
    let mut class_names = std::collections::BTreeMap::new();
    class_names.insert("road".to_string(), ROAD_CLASS);
    class_names.insert("sky".to_string(), SKY_CLASS);
    let package = ScenePackage {
        frames,
        intrinsics: spec.intrinsics(),
        poses,
        depth_maps: depths,
        seg_masks: masks,
        frame_rate: spec.frame_rate,
        n_target: spec.n_target,
        n_reference: spec.n_reference,
        class_names,
        decode_gamma: 2.2,
    };
    package.validate().expect("synthetic scene must validate");
    package
}

/// Lateral-track scene: the camera slides sideways past a textured wall at
/// constant distance. The flow field between frames is uniform, which
/// makes this the reference trajectory for stabilization accuracy tests.
#[derive(Debug, Clone)]
pub struct WallSceneSpec {
    pub width: usize,
    pub height: usize,
    pub n_target: usize,
    pub n_reference: usize,
    pub wall_distance: f64,
    /// Lateral motion per frame, meters along +x.
    pub step: f64,
    pub frame_rate: f64,
    pub focal: f64,
}

impl Default for WallSceneSpec {
    fn default() -> Self {
        Self {
            width: 96,
            height: 72,
            n_target: 5,
            n_reference: 8,
            wall_distance: 4.5,
            step: 0.15,
            frame_rate: 10.0,
            focal: 80.0,
        }
    }
}

impl WallSceneSpec {
    pub fn frame_count(&self) -> usize {
        self.n_target + self.n_reference
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.focal,
            0.0,
            self.width as f64 / 2.0,
            0.0,
            self.focal,
            self.height as f64 / 2.0,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Camera `i` at `(i * step, 0, 0)` looking along +y at the wall.
    pub fn pose(&self, i: usize) -> CameraPose {
        look_pose(&Vector3::new(i as f64 * self.step, 0.0, 0.0), &Vector3::y())
    }

    pub fn poses(&self) -> Vec<CameraPose> {
        (0..self.frame_count()).map(|i| self.pose(i)).collect()
    }
}

fn render_wall_frame(
    spec: &WallSceneSpec,
    pose: &CameraPose,
) -> (RgbGrid, ScalarGrid, ClassGrid) {
    let k_inv = spec.intrinsics().try_inverse().expect("intrinsics");
    let r_wc = pose.rotation.transpose();
    let origin = pose.camera_center();
    let mut image = RgbGrid::new_filled(spec.width, spec.height, [0.0; 3]);
    let mut depth = ScalarGrid::new_filled(spec.width, spec.height, 0.0);
    let mut mask = ClassGrid::new_filled(spec.width, spec.height, SKY_CLASS);
    const SS: usize = 4;
    for y in 0..spec.height {
        for x in 0..spec.width {
            let mut acc = [0.0f64; 3];
            for sy in 0..SS {
                for sx in 0..SS {
                    let px = x as f64 + (sx as f64 + 0.5) / SS as f64 - 0.5;
                    let py = y as f64 + (sy as f64 + 0.5) / SS as f64 - 0.5;
                    let dir = (r_wc * (k_inv * Vector3::new(px, py, 1.0))).normalize();
                    if dir.y > 1e-9 {
                        let t = (spec.wall_distance - origin.y) / dir.y;
                        let hit = origin + dir * t;
                        let c = ground_color(hit.x, hit.z);
                        for ch in 0..3 {
                            acc[ch] += c[ch] as f64;
                        }
                    }
                }
            }
            let inv = 1.0 / (SS * SS) as f64;
            image.set(
                x,
                y,
                [
                    (acc[0] * inv) as f32,
                    (acc[1] * inv) as f32,
                    (acc[2] * inv) as f32,
                ],
            );
            let dir = (r_wc * (k_inv * Vector3::new(x as f64, y as f64, 1.0))).normalize();
            if dir.y > 1e-9 {
                let t = (spec.wall_distance - origin.y) / dir.y;
                let hit = origin + dir * t;
                let cam_z = (pose.rotation * hit + pose.translation).z;
                depth.set(x, y, cam_z as f32);
                mask.set(x, y, ROAD_CLASS);
            }
        }
    }
    (image, depth, mask)
}

/// In-memory wall scene; see [`build_scene`] for the `manifest_poses`
/// convention.
pub fn build_wall_scene(
    spec: &WallSceneSpec,
    manifest_poses: Option<Vec<CameraPose>>,
) -> ScenePackage {
    let true_poses = spec.poses();
    let mut frames = Vec::with_capacity(spec.frame_count());
    let mut depths = Vec::with_capacity(spec.frame_count());
    let mut masks = Vec::with_capacity(spec.frame_count());
    for pose in &true_poses {
        let (img, depth, mask) = render_wall_frame(spec, pose);
        frames.push(img);
        depths.push(depth);
        masks.push(mask);
    }
    let poses = manifest_poses.unwrap_or(true_poses);
    let mut class_names = std::collections::BTreeMap::new();
    class_names.insert("road".to_string(), ROAD_CLASS);
    class_names.insert("sky".to_string(), SKY_CLASS);
    let package = ScenePackage {
        frames,
        intrinsics: spec.intrinsics(),
        poses,
        depth_maps: depths,
        seg_masks: masks,
        frame_rate: spec.frame_rate,
        n_target: spec.n_target,
        n_reference: spec.n_reference,
        class_names,
        decode_gamma: 2.2,
    };
    package.validate().expect("synthetic wall scene must validate");
    package
}

/// LDR panorama with a sky gradient and a bright sun disc at `sun_dir`.
pub fn ldr_panorama(height: usize, sun_dir: &Vector3<f64>) -> RgbGrid {
    let width = 2 * height;
    let sun = sun_dir.normalize();
    RgbGrid::from_fn(width, height, |x, y| {
        let dir = crate::lighting::pixel_to_direction(x, y, width, height);
        let mut c = if dir.z >= 0.0 {
            sky_color(&dir)
        } else {
            [0.12, 0.11, 0.10]
        };
        let angle = dir.dot(&sun).clamp(-1.0, 1.0).acos();
        if angle < 0.06 {
            c = [1.0, 1.0, 0.96];
        } else if angle < 0.12 {
            // Soft halo.
            let t = ((0.12 - angle) / 0.06) as f32;
            for (ch, base) in c.iter_mut().zip([1.0f32, 1.0, 0.96]) {
                *ch = *ch * (1.0 - t) + base * t;
            }
        }
        c
    })
}

/// Write a scene package to disk with the JSON manifest (camera-to-world
/// convention), returning the manifest path.
pub fn write_scene(
    dir: &Path,
    spec: &SyntheticSceneSpec,
    manifest_poses: Option<&[CameraPose]>,
) -> Result<PathBuf, SceneIoError> {
    std::fs::create_dir_all(dir.join("frames"))
        .and_then(|_| std::fs::create_dir_all(dir.join("depth")))
        .and_then(|_| std::fs::create_dir_all(dir.join("masks")))
        .map_err(|e| SceneIoError::Io(dir.display().to_string(), e.to_string()))?;

    let true_poses = spec.poses();
    let mut entries = Vec::with_capacity(spec.frame_count());
    for (i, pose) in true_poses.iter().enumerate() {
        let (img, depth, mask) = render_frame(spec, pose);
        let image_rel = format!("frames/{i:04}.png");
        let depth_rel = format!("depth/{i:04}.pfm");
        let mask_rel = format!("masks/{i:04}.png");
        raster::save_image_encoded(&dir.join(&image_rel), &img, 2.2)?;
        raster::save_pfm_gray(&dir.join(&depth_rel), &depth)?;
        raster::save_class_mask(&dir.join(&mask_rel), &mask)?;

        let written_pose = manifest_poses.map(|p| &p[i]).unwrap_or(pose);
        // Manifest uses camera-to-world; invert the internal convention.
        let r_cw = written_pose.rotation.transpose();
        let center = written_pose.camera_center();
        let mut rotation = [0.0f64; 9];
        for r in 0..3 {
            for c in 0..3 {
                rotation[r * 3 + c] = r_cw[(r, c)];
            }
        }
        entries.push(FrameEntry {
            image: image_rel,
            depth: depth_rel,
            mask: mask_rel,
            rotation,
            translation: [center.x, center.y, center.z],
        });
    }

    let mut class_names = std::collections::BTreeMap::new();
    class_names.insert("road".to_string(), ROAD_CLASS);
    class_names.insert("sky".to_string(), SKY_CLASS);
    let k = spec.intrinsics();
    let mut intrinsics = [0.0f64; 9];
    for r in 0..3 {
        for c in 0..3 {
            intrinsics[r * 3 + c] = k[(r, c)];
        }
    }
    let manifest = SceneManifest {
        version: 1,
        pose_convention: PoseConvention::CameraToWorld,
        intrinsics,
        frame_rate: spec.frame_rate,
        n_target: spec.n_target,
        n_reference: spec.n_reference,
        decode_gamma: 2.2,
        class_names,
        frames: entries,
    };
    let path = dir.join("scene.json");
    manifest.save(&path)?;
    Ok(path)
}

/// Write the demo asset set: scene, cube mesh, and LDR panorama. Returns
/// (manifest, mesh, panorama) paths.
pub fn write_demo_assets(
    dir: &Path,
    spec: &SyntheticSceneSpec,
) -> Result<(PathBuf, PathBuf, PathBuf), SceneIoError> {
    let manifest = write_scene(dir, spec, None)?;
    let mesh_path = dir.join("cube.obj");
    crate::scene::mesh::save_mesh_obj(&mesh_path, &crate::scene::mesh::unit_cube())?;
    let pano_path = dir.join("sky_pano.png");
    let sun = Vector3::new(0.4, -0.5, 0.76).normalize();
    raster::save_image_encoded(&pano_path, &ldr_panorama(64, &sun), 2.2)?;
    Ok((manifest, mesh_path, pano_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project_point;
    use nalgebra::Vector4;

    #[test]
    fn depth_maps_backproject_onto_ground() {
        let spec = SyntheticSceneSpec::default();
        let scene = build_scene(&spec, None);
        let pts = crate::geometry::backproject_depth(
            &scene.intrinsics,
            &scene.poses[0],
            &scene.depth_maps[0],
            7,
        );
        assert!(!pts.is_empty());
        for p in pts {
            assert!(p.z.abs() < 1e-4, "ground point off plane: {}", p.z);
        }
    }

    #[test]
    fn anchor_ahead_is_visible_in_all_target_frames() {
        let spec = SyntheticSceneSpec::default();
        let scene = build_scene(&spec, None);
        let last_center = scene.poses[scene.last_frame()].camera_center();
        let anchor = Vector4::new(last_center.x + 1.0, 0.0, 0.0, 1.0);
        for n in 0..scene.n_target {
            let proj = project_point(&scene.intrinsics, &scene.poses[n], &anchor);
            assert!(proj.is_ok(), "anchor behind camera in frame {n}");
        }
    }

    #[test]
    fn scene_round_trips_through_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSceneSpec {
            width: 48,
            height: 36,
            n_target: 2,
            n_reference: 1,
            ..Default::default()
        };
        let manifest = write_scene(dir.path(), &spec, None).unwrap();
        let scene = crate::scene::load_scene_package(&manifest).unwrap();
        assert_eq!(scene.frame_count(), 3);
        assert_eq!(scene.n_target, 2);
        // Poses survive the camera-to-world round trip.
        for (a, b) in scene.poses.iter().zip(spec.poses()) {
            assert!((a.rotation - b.rotation).norm() < 1e-9);
            assert!((a.translation - b.translation).norm() < 1e-9);
        }
        // Depth is lossless via PFM.
        let (_, depth, _) = render_frame(&spec, &spec.pose(0));
        assert_eq!(&depth, &scene.depth_maps[0]);
    }
}
