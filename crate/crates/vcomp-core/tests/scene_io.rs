//! Scene-package loading contracts over on-disk manifests.

use std::fs;

use vcomp_core::scene::{self, SceneIoError};
use vcomp_core::synthetic::{self, SyntheticSceneSpec};

fn small_spec(n_target: usize, n_reference: usize, frame_rate: f64) -> SyntheticSceneSpec {
    SyntheticSceneSpec {
        width: 32,
        height: 24,
        n_target,
        n_reference,
        frame_rate,
        ..Default::default()
    }
}

#[test]
fn eighty_frame_manifest_loads_completely() {
    // Eight seconds at 10 Hz.
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(72, 8, 10.0);
    let manifest = synthetic::write_scene(dir.path(), &spec, None).unwrap();
    let scene = scene::load_scene_package(&manifest).unwrap();
    assert_eq!(scene.frame_count(), 80);
    assert_eq!(scene.frame_rate, 10.0);
    assert_eq!(scene.n_target + scene.n_reference, 80);
}

#[test]
fn downsampled_manifest_keeps_declared_rate() {
    // A 60 Hz capture downsampled to 20 Hz is declared at 20 in the
    // manifest; the loader trusts the declaration.
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(10, 2, 20.0);
    let manifest = synthetic::write_scene(dir.path(), &spec, None).unwrap();
    let scene = scene::load_scene_package(&manifest).unwrap();
    assert_eq!(scene.frame_rate, 20.0);
}

#[test]
fn missing_depth_asset_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(2, 1, 10.0);
    let manifest = synthetic::write_scene(dir.path(), &spec, None).unwrap();
    fs::remove_file(dir.path().join("depth/0001.pfm")).unwrap();
    let err = scene::load_scene_package(&manifest).unwrap_err();
    match err {
        SceneIoError::MissingAsset(name) => assert!(name.contains("0001.pfm"), "got {name}"),
        other => panic!("expected MissingAsset, got {other}"),
    }
}

#[test]
fn dimension_mismatch_detected() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(2, 1, 10.0);
    let manifest = synthetic::write_scene(dir.path(), &spec, None).unwrap();
    // Replace one depth map with a smaller one.
    let small = vcomp_core::grid::ScalarGrid::new_filled(8, 8, 1.0);
    scene::raster::save_pfm_gray(&dir.path().join("depth/0001.pfm"), &small).unwrap();
    let err = scene::load_scene_package(&manifest).unwrap_err();
    assert!(matches!(err, SceneIoError::DimensionMismatch { .. }));
}

#[test]
fn non_orthonormal_rotation_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(2, 1, 10.0);
    let manifest_path = synthetic::write_scene(dir.path(), &spec, None).unwrap();
    let mut manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&manifest_path).unwrap()).unwrap();
    manifest["frames"][0]["rotation"] = serde_json::json!([
        1.0, 0.0, 0.0, //
        0.0, 2.0, 0.0, //
        0.0, 0.0, 1.0
    ]);
    fs::write(&manifest_path, manifest.to_string()).unwrap();
    let err = scene::load_scene_package(&manifest_path).unwrap_err();
    assert!(matches!(err, SceneIoError::InvalidPose { frame: 0, .. }));
}

#[test]
fn repeated_loads_are_identical() {
    // Parallel asset loading must not leak scheduling order into the
    // package.
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(4, 2, 10.0);
    let manifest = synthetic::write_scene(dir.path(), &spec, None).unwrap();
    let a = scene::load_scene_package(&manifest).unwrap();
    let b = scene::load_scene_package(&manifest).unwrap();
    assert_eq!(a.frames, b.frames);
    assert_eq!(a.depth_maps, b.depth_maps);
    assert_eq!(a.seg_masks, b.seg_masks);
    for (pa, pb) in a.poses.iter().zip(&b.poses) {
        assert_eq!(pa, pb);
    }
}

#[test]
fn frame_split_must_cover_all_frames() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(2, 1, 10.0);
    let manifest_path = synthetic::write_scene(dir.path(), &spec, None).unwrap();
    let mut manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&manifest_path).unwrap()).unwrap();
    manifest["n_target"] = serde_json::json!(5);
    fs::write(&manifest_path, manifest.to_string()).unwrap();
    assert!(scene::load_scene_package(&manifest_path).is_err());
}

#[cfg(unix)]
#[test]
fn read_only_output_dir_is_io_error() {
    use std::os::unix::fs::PermissionsExt;
    let dir = tempfile::tempdir().unwrap();
    let locked = dir.path().join("locked");
    fs::create_dir(&locked).unwrap();
    fs::set_permissions(&locked, fs::Permissions::from_mode(0o555)).unwrap();
    // Root ignores permission bits; nothing to verify in that case.
    if fs::write(locked.join("probe"), b"x").is_ok() {
        eprintln!("skipping: permissions are not enforced for this user");
        fs::set_permissions(&locked, fs::Permissions::from_mode(0o755)).unwrap();
        return;
    }

    let frame = vcomp_core::render::CompositeOutput {
        rgb: vcomp_core::grid::RgbGrid::new_filled(4, 4, [0.5; 3]),
        object_mask: vcomp_core::grid::ScalarGrid::new_filled(4, 4, 0.0),
        shadow_mask: vcomp_core::grid::ScalarGrid::new_filled(4, 4, 0.0),
        object_depth: vcomp_core::grid::ScalarGrid::new_filled(4, 4, f32::INFINITY),
    };
    let meta = vcomp_core::scene::outputs::RunMeta {
        config_hash: "test".to_string(),
        seed: 0,
        encode_gamma: 2.2,
        placement: vec![],
        warnings: vec![],
        stages: Default::default(),
        effective_config: serde_json::json!({}),
    };
    let err = scene::write_outputs(&locked, &[frame], meta).unwrap_err();
    assert!(matches!(
        err,
        SceneIoError::Io(..) | SceneIoError::Encode(..)
    ));
    // Restore permissions so the tempdir can clean up.
    fs::set_permissions(&locked, fs::Permissions::from_mode(0o755)).unwrap();
}
