//! Generate the bundled synthetic demo assets (scene, cube mesh, LDR
//! panorama) plus a ready-to-run pipeline config.
//!
//! Usage: cargo run -p vcomp-core --example gen_scene -- <output-dir>

use vcomp_core::pipeline;

fn main() {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "demo_scene".to_string());
    let dir = std::path::PathBuf::from(dir);
    std::fs::create_dir_all(&dir).expect("create output dir");
    let config = pipeline::demo_config(&dir).expect("write demo assets");
    let config_path = dir.join("config.json");
    std::fs::write(
        &config_path,
        serde_json::to_string_pretty(&config).expect("serialize config"),
    )
    .expect("write config");
    println!("scene manifest: {}", config.scene_manifest.display());
    println!("mesh:           {}", config.mesh.display());
    println!("config:         {}", config_path.display());
    println!();
    println!(
        "run:            vcomp simulate --config {}",
        config_path.display()
    );
}
