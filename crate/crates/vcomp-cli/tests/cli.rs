//! Binary-level tests: exit codes, subcommand wiring, and output
//! determinism through the real CLI surface.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn vcomp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vcomp"))
}

fn demo_assets(dir: &Path) -> PathBuf {
    let config = vcomp_core::pipeline::demo_config(dir).unwrap();
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn missing_config_exits_2() {
    let out = vcomp()
        .args(["simulate", "--config", "/nonexistent/config.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_scene_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = demo_assets(dir.path());
    let out_dir = dir.path().join("never");
    let out = vcomp()
        .args([
            "simulate",
            "--config",
            config_path.to_str().unwrap(),
            "--scene",
            "/nonexistent/scene.json",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn simulate_runs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = demo_assets(dir.path());

    let run = |out_dir: &Path| {
        let out = vcomp()
            .args([
                "simulate",
                "--config",
                config_path.to_str().unwrap(),
                "--out",
                out_dir.to_str().unwrap(),
                "--samples",
                "16",
                "--no-stabilize",
            ])
            .output()
            .unwrap();
        assert_eq!(
            out.status.code(),
            Some(0),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    };
    let dir_a = dir.path().join("a");
    let dir_b = dir.path().join("b");
    run(&dir_a);
    run(&dir_b);

    for i in 0..5 {
        for prefix in ["frame", "object_mask", "shadow_mask"] {
            let name = format!("{prefix}_{i:04}.png");
            let a = fs::read(dir_a.join(&name)).unwrap();
            let b = fs::read(dir_b.join(&name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
    }
}

#[test]
fn light_writes_environment_exr() {
    let dir = tempfile::tempdir().unwrap();
    demo_assets(dir.path());
    let out_path = dir.path().join("env.exr");
    let out = vcomp()
        .args([
            "light",
            "--ldr",
            dir.path().join("sky_pano.png").to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("light prints JSON");
    assert!(out_path.exists());
    let sun: Vec<f64> = report["sun_direction"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let norm = (sun[0] * sun[0] + sun[1] * sun[1] + sun[2] * sun[2]).sqrt();
    assert!((norm - 1.0).abs() < 1e-6);
}

#[test]
fn retrieval_index_and_query_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    // Three synthetic descriptor files around distinct centers.
    let write_video = |name: &str, center: f32| {
        let rows: Vec<Vec<f32>> = (0..30)
            .map(|i| vec![center + (i % 5) as f32 * 0.01, center * 0.5])
            .collect();
        let path = dir.path().join(name);
        vcomp_core::matrixio::save_matrix(&path, &vcomp_core::matrixio::MatrixF32::new(2, rows))
            .unwrap();
        path
    };
    let v0 = write_video("clip_a.bin", 0.0);
    let v1 = write_video("clip_b.bin", 10.0);
    let v2 = write_video("clip_c.bin", -7.0);

    let index_path = dir.path().join("index.json");
    let out = vcomp()
        .args([
            "retrieve-index",
            "--descriptors",
            v0.to_str().unwrap(),
            v1.to_str().unwrap(),
            v2.to_str().unwrap(),
            "--k",
            "3",
            "--out",
            index_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let out = vcomp()
        .args([
            "retrieve-query",
            "--index",
            index_path.to_str().unwrap(),
            "--query",
            v1.to_str().unwrap(),
            "--top",
            "2",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["hits"][0]["video_id"], "clip_b");
    assert!((report["hits"][0]["score"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn fid_reports_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let save = |name: &str, rows: Vec<Vec<f32>>| {
        let path = dir.path().join(name);
        vcomp_core::matrixio::save_matrix(&path, &vcomp_core::matrixio::MatrixF32::new(1, rows))
            .unwrap();
        path
    };
    // 1-D, equal variance, means 1 apart: FID = 1.
    let a = save("a.bin", vec![vec![0.0], vec![2.0]]);
    let b = save("b.bin", vec![vec![1.0], vec![3.0]]);
    let out = vcomp()
        .args([
            "fid",
            "--features-a",
            a.to_str().unwrap(),
            "--features-b",
            b.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((report["fid"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(report["n_a"], 2);
    assert_eq!(report["d"], 1);
}

#[test]
fn inspect_summarizes_scene_and_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = demo_assets(dir.path());
    let config: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(config_path).unwrap()).unwrap();
    let out = vcomp()
        .args([
            "inspect",
            "--scene",
            config["scene_manifest"].as_str().unwrap(),
            "--mesh",
            config["mesh"].as_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["scene"]["frames"], 13);
    assert_eq!(report["mesh"]["triangles"], 12);
    // A unit cube has surface area 6.
    assert!((report["mesh"]["surface_area"].as_f64().unwrap() - 6.0).abs() < 1e-9);
}

#[test]
fn inspect_nothing_exits_2() {
    let out = vcomp().args(["inspect"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stabilize_subcommand_reports_track() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = demo_assets(dir.path());
    let config: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(config_path).unwrap()).unwrap();
    let residuals = dir.path().join("residuals.csv");
    let out = vcomp()
        .args([
            "stabilize",
            "--scene",
            config["scene_manifest"].as_str().unwrap(),
            "--allowed",
            "road",
            "--anchor-radius",
            "8",
            "--residuals",
            residuals.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["frames"].as_array().unwrap().len(), 5);
    let csv = fs::read_to_string(residuals).unwrap();
    assert!(csv.lines().count() == 6, "csv: {csv}");
}

#[test]
fn failing_refine_plugin_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = demo_assets(dir.path());
    let script = dir.path().join("broken.sh");
    fs::write(&script, "#!/bin/sh\nexit 7\n").unwrap();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(&script, fs::Permissions::from_mode(0o755)).unwrap();
    }
    // Patch the config to use the failing plugin.
    let mut config: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&config_path).unwrap()).unwrap();
    config["style"]["plugin"] = serde_json::json!(script.display().to_string());
    fs::write(&config_path, serde_json::to_string_pretty(&config).unwrap()).unwrap();

    let out = vcomp()
        .args([
            "simulate",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            dir.path().join("out").to_str().unwrap(),
            "--samples",
            "4",
            "--no-stabilize",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("refine") && stderr.contains("frame"),
        "stage or frame missing from: {stderr}"
    );
}

#[test]
fn light_stitches_side_views_with_coverage() {
    let dir = tempfile::tempdir().unwrap();
    // One synthetic side view looking along +x.
    let image = vcomp_core::grid::RgbGrid::new_filled(32, 24, [0.5, 0.25, 0.125]);
    vcomp_core::scene::raster::save_image_encoded(&dir.path().join("view0.png"), &image, 2.2)
        .unwrap();
    let views = serde_json::json!({
        "pose_convention": "world_to_camera",
        "height": 32,
        "views": [{
            "image": "view0.png",
            "intrinsics": [30.0, 0.0, 15.5, 0.0, 30.0, 11.5, 0.0, 0.0, 1.0],
            // Camera +z along world +x, +y toward world -z.
            "rotation": [0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0],
            "translation": [0.0, 0.0, 0.0],
        }],
    });
    let views_path = dir.path().join("views.json");
    fs::write(&views_path, views.to_string()).unwrap();
    let out_path = dir.path().join("env.exr");
    let out = vcomp()
        .args([
            "light",
            "--views",
            views_path.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out_path.exists());
    assert!(dir.path().join("env_coverage.exr").exists());
    let coverage =
        vcomp_core::scene::raster::load_radiance(&dir.path().join("env_coverage.exr")).unwrap();
    let covered = coverage.data().iter().filter(|p| p[0] > 0.0).count();
    let total = coverage.width() * coverage.height();
    assert!(covered > 0 && covered < total, "coverage {covered}/{total}");
}
