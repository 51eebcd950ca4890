//! Placement strategies and track construction over synthetic scenes.

use nalgebra::{Vector3, Vector4};

use vcomp_core::geometry::project_point;
use vcomp_core::placement::{
    self, build_track, select_placement_point, PlacementError, PlacementStrategy,
};
use vcomp_core::synthetic::{self, SyntheticSceneSpec, WallSceneSpec, ROAD_CLASS};

#[test]
fn future_camera_anchor_sits_under_last_camera_on_the_plane() {
    let spec = SyntheticSceneSpec::default();
    let scene = synthetic::build_scene(&spec, None);
    let allowed = [ROAD_CLASS];
    let anchor =
        select_placement_point(&scene, PlacementStrategy::FutureCamera, &allowed).unwrap();
    let last_center = scene.poses[scene.last_frame()].camera_center();
    // Ground plane is z = 0: the anchor keeps the camera (x, y) at height 0.
    assert!((anchor.x - last_center.x).abs() < 1e-4, "x {}", anchor.x);
    assert!((anchor.y - last_center.y).abs() < 1e-4, "y {}", anchor.y);
    assert!(anchor.z.abs() < 1e-4, "z {}", anchor.z);

    // And it lies on the fitted plane itself within 1e-6.
    let plane =
        placement::fit_ground_plane(&scene, scene.n_target - 1, &allowed, 1).unwrap();
    let value = plane.signed_distance(&Vector3::new(anchor.x, anchor.y, anchor.z));
    assert!(value.abs() < 1e-6, "plane residual {value}");
}

#[test]
fn mask_region_anchor_lands_deep_inside_the_block() {
    let spec = SyntheticSceneSpec::default();
    let mut scene = synthetic::build_scene(&spec, None);
    // Restrict the last target frame's allowed region to a 20x20 block.
    let frame = scene.n_target - 1;
    let (bx, by) = (30usize, 26usize);
    let mask = vcomp_core::grid::ClassGrid::from_fn(scene.width(), scene.height(), |x, y| {
        if (bx..bx + 20).contains(&x) && (by..by + 20).contains(&y) {
            ROAD_CLASS
        } else {
            0
        }
    });
    scene.seg_masks[frame] = mask;

    let allowed = [ROAD_CLASS];
    let anchor = select_placement_point(&scene, PlacementStrategy::MaskRegion, &allowed).unwrap();
    // Reproject the anchor into the same frame; it must land in the block
    // at least 9 px from its boundary.
    let proj = project_point(&scene.intrinsics, &scene.poses[frame], &anchor).unwrap();
    let (px, py) = (proj.pixel.x, proj.pixel.y);
    let margin = [
        px - bx as f64,
        (bx + 19) as f64 - px,
        py - by as f64,
        (by + 19) as f64 - py,
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min)
        + 1.0; // boundary is one pixel beyond the last allowed pixel
    assert!(margin >= 9.0, "anchor only {margin:.2} px from the boundary");
}

#[test]
fn empty_allowed_region_is_rejected() {
    let spec = SyntheticSceneSpec::default();
    let mut scene = synthetic::build_scene(&spec, None);
    let frame = scene.n_target - 1;
    scene.seg_masks[frame] =
        vcomp_core::grid::ClassGrid::new_filled(scene.width(), scene.height(), 0);
    let err = select_placement_point(&scene, PlacementStrategy::MaskRegion, &[ROAD_CLASS])
        .unwrap_err();
    assert!(matches!(err, PlacementError::NoPlaceableRegion));
}

#[test]
fn static_camera_gives_constant_track() {
    let spec = WallSceneSpec {
        step: 0.0,
        ..Default::default()
    };
    let scene = synthetic::build_wall_scene(&spec, None);
    let allowed = [ROAD_CLASS];
    let anchor =
        select_placement_point(&scene, PlacementStrategy::FutureCamera, &allowed).unwrap();
    let track = build_track(&scene, &anchor, &allowed);
    let first = track.entries[0].pixel;
    for entry in &track.entries {
        assert!((entry.pixel - first).norm() < 1e-12);
        assert!(entry.visible);
    }
}

#[test]
fn track_pixels_match_direct_projection() {
    // Delegation identity: every visible entry equals project_point.
    let scene = synthetic::build_scene(&SyntheticSceneSpec::default(), None);
    let allowed = [ROAD_CLASS];
    let anchor =
        select_placement_point(&scene, PlacementStrategy::FutureCamera, &allowed).unwrap();
    let track = build_track(&scene, &anchor, &allowed);
    for (n, entry) in track.entries.iter().enumerate() {
        if entry.visible {
            let proj = project_point(&scene.intrinsics, &scene.poses[n], &anchor).unwrap();
            assert_eq!(proj.pixel, entry.pixel);
            assert_eq!(proj.depth, entry.depth);
        }
        if entry.valid_class {
            assert!(placement::occlusion_check(
                &scene.seg_masks[n],
                &entry.pixel,
                &allowed
            ));
        }
    }
}

#[test]
fn camera_passing_anchor_flips_visibility() {
    // Cameras drive past a fixed anchor; once the anchor falls behind the
    // camera the entry must be invisible.
    let spec = SyntheticSceneSpec {
        n_target: 8,
        n_reference: 5,
        ..Default::default()
    };
    let scene = synthetic::build_scene(&spec, None);
    // Anchor between target frames 2 and 3 (cameras at 0.30 and 0.45 m).
    let anchor = Vector4::new(0.375, 0.0, 0.0, 1.0);
    let track = build_track(&scene, &anchor, &[ROAD_CLASS]);
    assert!(track.entries[0].visible && track.entries[1].visible);
    let first_behind = track
        .entries
        .iter()
        .position(|e| !e.visible)
        .expect("anchor must fall behind at some frame");
    for entry in &track.entries[first_behind..] {
        assert!(!entry.visible, "visibility must stay false once behind");
        assert!(!entry.valid_class);
    }
}
