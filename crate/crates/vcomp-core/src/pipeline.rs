//! End-to-end insertion pipeline: load, place, stabilize, light, render,
//! shadow, composite, optionally refine, write. Each stage is also
//! reachable on its own through the library modules; this orchestrator
//! wires them per config and records every effective parameter in the run
//! manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::CameraPose;
use crate::grid::ScalarGrid;
use crate::lighting::{self, HdrPanorama, SunModelParams};
use crate::placement::{self, PlacementStrategy};
use crate::render::{self, CompositeOutput, ObjectPose, PlacedMesh, RenderOptions, ShadowOptions};
use crate::scene::outputs::{PlacementRecord, RunMeta};
use crate::scene::{self, raster};
use crate::stabilize::{self, RefineOptions};
use crate::style;

/// Environment variable overriding the scratch directory used for plugin
/// workdirs (defaults to `<output_dir>/scratch`).
pub const TMPDIR_ENV: &str = "VCOMP_TMPDIR";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config validation failed: {0}")]
    Validation(String),
    #[error("stage {stage}{}: {message}", frame.map(|f| format!(" (frame {f})")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        frame: Option<usize>,
        message: String,
    },
}

impl PipelineError {
    fn stage(stage: &'static str, err: impl std::fmt::Display) -> Self {
        Self::Stage {
            stage,
            frame: None,
            message: err.to_string(),
        }
    }

    fn stage_frame(stage: &'static str, frame: usize, err: impl std::fmt::Display) -> Self {
        Self::Stage {
            stage,
            frame: Some(frame),
            message: err.to_string(),
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlacementConfig {
    #[serde(default = "PlacementConfig::default_strategy")]
    pub strategy: PlacementStrategy,
    /// Class names (or numeric ids) where the object may sit.
    pub allowed_classes: Vec<String>,
    /// Yaw about the ground normal, radians; defaults to the reference
    /// camera heading.
    #[serde(default)]
    pub yaw: f64,
    /// Lift along the ground normal, meters (for meshes whose origin is
    /// not at their base).
    #[serde(default)]
    pub ground_offset: f64,
}

impl PlacementConfig {
    fn default_strategy() -> PlacementStrategy {
        PlacementStrategy::FutureCamera
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilizationConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default = "StabilizationConfig::default_anchor_count")]
    pub anchor_count: usize,
    #[serde(default = "StabilizationConfig::default_levels")]
    pub pyramid_levels: usize,
    #[serde(default = "StabilizationConfig::default_window")]
    pub window: usize,
    #[serde(default = "StabilizationConfig::default_confidence")]
    pub confidence_threshold: f64,
    /// Anchors must lie within this many meters of the placement anchor.
    #[serde(default = "StabilizationConfig::default_radius")]
    pub anchor_search_radius: f64,
    /// Directory of precomputed flow files (`flow_{n}_{n+1}.pfm`);
    /// rasters are (dx, dy, confidence). Overrides the built-in estimator.
    #[serde(default)]
    pub flow_dir: Option<PathBuf>,
}

impl StabilizationConfig {
    fn default_anchor_count() -> usize {
        stabilize::DEFAULT_ANCHOR_COUNT
    }
    fn default_levels() -> usize {
        3
    }
    fn default_window() -> usize {
        15
    }
    fn default_confidence() -> f64 {
        stabilize::DEFAULT_CONFIDENCE_THRESHOLD
    }
    fn default_radius() -> f64 {
        25.0
    }
}

impl Default for StabilizationConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LightingConfig {
    /// Display-encoded panorama used by the fallback lighting chain.
    #[serde(default)]
    pub ldr_panorama: Option<PathBuf>,
    /// Ready-made HDR environment; bypasses the estimation chain.
    #[serde(default)]
    pub hdr_panorama: Option<PathBuf>,
    #[serde(default = "LightingConfig::default_transmittance")]
    pub transmittance: f64,
    #[serde(default = "LightingConfig::default_sharpness")]
    pub sharpness: f64,
    /// Decode gamma of the LDR panorama and inverse-tone-map exponent.
    #[serde(default = "LightingConfig::default_gamma")]
    pub gamma: f64,
    /// Radiance multiplier applied by the inverse tone map.
    #[serde(default = "LightingConfig::default_scale")]
    pub scale: f64,
    /// Peaking exponent of the fallback sun detector.
    #[serde(default = "LightingConfig::default_peak_exponent")]
    pub peak_exponent: f64,
    /// External estimators (each reads input.exr, writes output.exr in its
    /// workdir); fallbacks engage when absent.
    #[serde(default)]
    pub sky_hdr_plugin: Option<String>,
    #[serde(default)]
    pub panorama_inpaint_plugin: Option<String>,
    #[serde(default)]
    pub ldr_to_hdr_plugin: Option<String>,
}

impl LightingConfig {
    fn default_transmittance() -> f64 {
        1.0
    }
    fn default_sharpness() -> f64 {
        0.1
    }
    fn default_gamma() -> f64 {
        2.2
    }
    fn default_scale() -> f64 {
        1.0
    }
    fn default_peak_exponent() -> f64 {
        8.0
    }
}

impl Default for LightingConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenderConfig {
    #[serde(default = "RenderConfig::default_samples")]
    pub samples: usize,
    #[serde(default = "RenderConfig::default_coverage")]
    pub coverage_samples: usize,
    #[serde(default = "default_true")]
    pub shadow: bool,
    #[serde(default = "RenderConfig::default_shadow_strength")]
    pub shadow_strength: f64,
    /// Angular radius of the sun jitter cone, radians; 0 = hard shadows.
    #[serde(default = "RenderConfig::default_softness")]
    pub shadow_softness: f64,
    #[serde(default = "RenderConfig::default_shadow_samples")]
    pub shadow_samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Dump per-frame object, coverage, and shadow layers as EXR under
    /// `<out>/debug/`.
    #[serde(default)]
    pub debug_dumps: bool,
}

impl RenderConfig {
    fn default_samples() -> usize {
        64
    }
    fn default_coverage() -> usize {
        4
    }
    fn default_shadow_strength() -> f64 {
        0.7
    }
    fn default_softness() -> f64 {
        0.03
    }
    fn default_shadow_samples() -> usize {
        16
    }
}

impl Default for RenderConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StyleConfig {
    #[serde(default = "default_true")]
    pub refine: bool,
    /// External refinement command; identity fallback when absent.
    #[serde(default)]
    pub plugin: Option<String>,
    #[serde(default = "StyleConfig::default_timeout")]
    pub timeout_secs: f64,
    /// Upper bound on concurrently running refinement plugins.
    #[serde(default = "StyleConfig::default_max_plugin_jobs")]
    pub max_plugin_jobs: usize,
    /// Penalty weight recorded for training-side tooling.
    #[serde(default = "StyleConfig::default_lambda")]
    pub lambda: f64,
}

impl StyleConfig {
    fn default_timeout() -> f64 {
        120.0
    }
    fn default_max_plugin_jobs() -> usize {
        1
    }
    fn default_lambda() -> f64 {
        10.0
    }
}

impl Default for StyleConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub scene_manifest: PathBuf,
    pub mesh: PathBuf,
    pub output_dir: PathBuf,
    pub placement: PlacementConfig,
    #[serde(default)]
    pub stabilization: StabilizationConfig,
    #[serde(default)]
    pub lighting: LightingConfig,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default)]
    pub style: StyleConfig,
    /// Worker threads; 0 = all logical cores.
    #[serde(default)]
    pub jobs: usize,
}

impl PipelineConfig {
    pub fn from_path(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !self.scene_manifest.exists() {
            return Err(PipelineError::Validation(format!(
                "scene manifest not found: {}",
                self.scene_manifest.display()
            )));
        }
        if !self.mesh.exists() {
            return Err(PipelineError::Validation(format!(
                "mesh not found: {}",
                self.mesh.display()
            )));
        }
        if self.lighting.ldr_panorama.is_none() && self.lighting.hdr_panorama.is_none() {
            return Err(PipelineError::Validation(
                "lighting needs ldr_panorama or hdr_panorama".to_string(),
            ));
        }
        for (name, path) in [
            ("ldr_panorama", &self.lighting.ldr_panorama),
            ("hdr_panorama", &self.lighting.hdr_panorama),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(PipelineError::Validation(format!(
                        "{name} not found: {}",
                        p.display()
                    )));
                }
            }
        }
        if self.placement.allowed_classes.is_empty() {
            return Err(PipelineError::Validation(
                "allowed_classes must not be empty".to_string(),
            ));
        }
        if self.render.samples == 0 || self.render.coverage_samples == 0 {
            return Err(PipelineError::Validation(
                "render sample counts must be at least 1".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.render.shadow_strength) {
            return Err(PipelineError::Validation(
                "shadow_strength must be in [0,1]".to_string(),
            ));
        }
        if self.lighting.transmittance <= 0.0 || self.lighting.sharpness <= 0.0 {
            return Err(PipelineError::Validation(
                "sun model parameters must be positive".to_string(),
            ));
        }
        Ok(())
    }

    /// Hash of the content-relevant config: where outputs land and how
    /// many workers run do not change what gets produced, so they are
    /// excluded and two runs into different directories compare equal.
    pub fn config_hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = PathBuf::new();
        canon.jobs = 0;
        let text = serde_json::to_string(&canon).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().fold(String::new(), |mut acc, b| {
            use std::fmt::Write as _;
            let _ = write!(acc, "{b:02x}");
            acc
        })
    }
}

/// Built environment: radiance map plus the sun direction used for shadows.
pub struct LightingRig {
    pub environment: HdrPanorama,
    pub sun_direction: Vector3<f64>,
}

/// Resolve the HDR environment per config: a ready HDR map if given,
/// otherwise the estimation chain over the LDR panorama (plugin or
/// fallback at each seam).
pub fn build_lighting(
    config: &LightingConfig,
    scratch_dir: &Path,
) -> Result<LightingRig, PipelineError> {
    let err = |e: &dyn std::fmt::Display| PipelineError::stage("lighting", e);
    if let Some(hdr_path) = &config.hdr_panorama {
        let radiance = raster::load_radiance(hdr_path).map_err(|e| err(&e))?;
        let environment = HdrPanorama::new(radiance).map_err(|e| err(&e))?;
        let prob = lighting::detect_sun_fallback(&environment.radiance, config.peak_exponent);
        return Ok(LightingRig {
            sun_direction: prob.peak_direction(),
            environment,
        });
    }

    let ldr_path = config.ldr_panorama.as_ref().expect("validated");
    let mut ldr = raster::load_image_linear(ldr_path, config.gamma).map_err(|e| err(&e))?;
    // The loader linearizes; the tone-map chain below expects the
    // display-encoded values, so undo it here once.
    ldr = ldr.map(|p| {
        [
            (p[0].max(0.0) as f64).powf(1.0 / config.gamma) as f32,
            (p[1].max(0.0) as f64).powf(1.0 / config.gamma) as f32,
            (p[2].max(0.0) as f64).powf(1.0 / config.gamma) as f32,
        ]
    });

    if let Some(cmd) = &config.panorama_inpaint_plugin {
        ldr = run_raster_plugin(cmd, &ldr, scratch_dir, "inpaint").map_err(|e| err(&e))?;
    }

    let prob = lighting::detect_sun_fallback(&ldr, config.peak_exponent);
    let params = SunModelParams::new(config.transmittance, config.sharpness)
        .map_err(|e| err(&e))?;
    let sun = lighting::sun_radiance_map(&prob, &params).map_err(|e| err(&e))?;

    let sky = if let Some(cmd) = &config.sky_hdr_plugin {
        let out = run_raster_plugin(cmd, &ldr, scratch_dir, "sky_hdr").map_err(|e| err(&e))?;
        HdrPanorama::new(out).map_err(|e| err(&e))?
    } else if let Some(cmd) = &config.ldr_to_hdr_plugin {
        let out = run_raster_plugin(cmd, &ldr, scratch_dir, "ldr2hdr").map_err(|e| err(&e))?;
        HdrPanorama::new(out).map_err(|e| err(&e))?
    } else {
        lighting::inverse_tone_map(&ldr, config.gamma, config.scale).map_err(|e| err(&e))?
    };

    let environment = lighting::blend_hdr(&sun, &sky).map_err(|e| err(&e))?;
    Ok(LightingRig {
        environment,
        sun_direction: prob.peak_direction(),
    })
}

/// EXR-in, EXR-out plugin exchange shared by the lighting seams.
fn run_raster_plugin(
    cmd: &str,
    input: &crate::grid::RgbGrid,
    scratch_dir: &Path,
    name: &str,
) -> Result<crate::grid::RgbGrid, String> {
    let workdir = scratch_dir.join(name);
    std::fs::create_dir_all(&workdir).map_err(|e| e.to_string())?;
    raster::save_radiance(&workdir.join("input.exr"), input).map_err(|e| e.to_string())?;
    crate::plugin::run_command(cmd, &workdir, Duration::from_secs(300))
        .map_err(|e| e.to_string())?;
    raster::load_radiance(&workdir.join("output.exr")).map_err(|e| e.to_string())
}

/// Everything the run produced, for callers and tests.
#[derive(Debug)]
pub struct RunSummary {
    pub run_manifest: PathBuf,
    pub warnings: Vec<String>,
    pub track: placement::PlacementTrack,
}

/// Execute the full insertion pipeline for every target frame.
pub fn run_insert_pipeline(config: &PipelineConfig) -> Result<RunSummary, PipelineError> {
    config.validate()?;
    let mut warnings: Vec<String> = Vec::new();

    // --- load ---------------------------------------------------------
    let scene_pkg = scene::load_scene_package(&config.scene_manifest)
        .map_err(|e| PipelineError::stage("load", e))?;
    let mesh = scene::load_mesh(&config.mesh).map_err(|e| PipelineError::stage("load", e))?;
    let allowed = scene_pkg
        .class_ids(&config.placement.allowed_classes)
        .map_err(|e| PipelineError::Validation(e.to_string()))?;

    // --- place ----------------------------------------------------------
    let plane = placement::fit_ground_plane(&scene_pkg, scene_pkg.n_target - 1, &allowed, 1)
        .map_err(|e| PipelineError::stage("place", e))?;
    let anchor = placement::select_placement_point(&scene_pkg, config.placement.strategy, &allowed)
        .map_err(|e| PipelineError::stage("place", e))?;
    let raw_track = placement::build_track(&scene_pkg, &anchor, &allowed);

    // --- stabilize ------------------------------------------------------
    let (track, poses, stab_diag) = if config.stabilization.enabled {
        let anchor_pt = Vector3::new(anchor.x, anchor.y, anchor.z);
        let anchors = stabilize::select_anchors(
            &scene_pkg,
            &allowed,
            config.stabilization.anchor_count,
            Some(&anchor_pt),
            config.stabilization.anchor_search_radius,
            7,
        )
        .map_err(|e| PipelineError::stage("stabilize", e))?;
        let flows = match &config.stabilization.flow_dir {
            Some(dir) => stabilize::load_flow_files(dir, scene_pkg.n_target)
                .map_err(|e| PipelineError::stage("stabilize", e))?,
            None => stabilize::consecutive_flows(
                &scene_pkg,
                config.stabilization.pyramid_levels,
                config.stabilization.window,
            ),
        };
        let tracked = stabilize::track_anchors(
            &scene_pkg,
            anchors,
            &flows,
            config.stabilization.confidence_threshold,
        );
        let result = stabilize::stabilize_track(
            &scene_pkg,
            &raw_track,
            &tracked,
            &allowed,
            &RefineOptions::default(),
        );
        warnings.extend(result.warnings.clone());
        (result.track, result.poses, Some(result.diagnostics))
    } else {
        (
            raw_track.clone(),
            scene_pkg.poses[..scene_pkg.n_target].to_vec(),
            None,
        )
    };

    // --- light ----------------------------------------------------------
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| PipelineError::stage("write", e))?;
    let scratch = std::env::var(TMPDIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|_| config.output_dir.join("scratch"));
    let rig = build_lighting(&config.lighting, &scratch)?;

    // --- object pose ------------------------------------------------------
    let heading = scene_pkg.poses[scene_pkg.last_frame()].forward_axis();
    let anchor_pt = Vector3::new(anchor.x, anchor.y, anchor.z);
    let (obj_rot, obj_t) = placement::object_pose_at_anchor(
        &plane,
        &anchor_pt,
        &heading,
        config.placement.yaw,
        config.placement.ground_offset,
    );
    let placed = PlacedMesh::new(
        &mesh,
        &ObjectPose {
            rotation: obj_rot,
            translation: obj_t,
        },
    );

    // --- render / shadow / composite / refine ---------------------------
    let (width, height) = (scene_pkg.width(), scene_pkg.height());
    let mut composites: Vec<CompositeOutput> = Vec::with_capacity(scene_pkg.n_target);
    for n in 0..scene_pkg.n_target {
        let pose: &CameraPose = &poses[n];
        let layer = render::render_object(
            &placed,
            pose,
            &scene_pkg.intrinsics,
            &rig.environment,
            width,
            height,
            &RenderOptions {
                samples: config.render.samples,
                coverage_samples: config.render.coverage_samples,
                seed: config.render.seed,
                frame: n as u64,
            },
        );
        let shadow = if config.render.shadow {
            render::cast_shadow(
                &placed,
                &plane,
                &rig.sun_direction,
                &scene_pkg.intrinsics,
                pose,
                width,
                height,
                &ShadowOptions {
                    angular_radius: config.render.shadow_softness,
                    samples: config.render.shadow_samples,
                    seed: config.render.seed,
                    frame: n as u64,
                },
            )
        } else {
            ScalarGrid::new_filled(width, height, 0.0)
        };
        if config.render.debug_dumps {
            let debug_dir = config.output_dir.join("debug");
            std::fs::create_dir_all(&debug_dir)
                .map_err(|e| PipelineError::stage_frame("write", n, e))?;
            let object_rgb = layer.rgba.map(|p| [p[0], p[1], p[2]]);
            let coverage = layer.rgba.map(|p| [p[3]; 3]);
            let shadow_rgb = shadow.map(|&v| [v; 3]);
            for (name, grid) in [
                ("object", &object_rgb),
                ("coverage", &coverage),
                ("shadow", &shadow_rgb),
            ] {
                raster::save_radiance(&debug_dir.join(format!("{name}_{n:04}.exr")), grid)
                    .map_err(|e| PipelineError::stage_frame("write", n, e))?;
            }
        }

        let composite = render::composite_frame(
            &scene_pkg.frames[n],
            &layer,
            &shadow,
            &scene_pkg.depth_maps[n],
            config.render.shadow_strength,
        )
        .map_err(|e| PipelineError::stage_frame("composite", n, e))?;
        composites.push(composite);
    }

    // --- refine -----------------------------------------------------------
    // With no plugin the identity fallback leaves composites untouched and
    // no subprocess spawns. Plugin invocations get distinct workdirs and
    // run at most max_plugin_jobs at a time.
    if config.style.refine && config.style.plugin.is_some() {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.style.max_plugin_jobs.max(1))
            .build()
            .map_err(|e| PipelineError::stage("refine", e))?;
        let refined: Vec<Result<crate::grid::RgbGrid, PipelineError>> = pool.install(|| {
            composites
                .par_iter()
                .enumerate()
                .map(|(n, composite)| {
                    let fg = composite.object_mask.map(|&a| a >= 0.5);
                    let triple = style::assemble_inpaint_inputs(&composite.rgb, &fg)
                        .map_err(|e| PipelineError::stage_frame("refine", n, e))?;
                    let workdir = scratch.join(format!("refine_{n:04}"));
                    style::refine_frame_external(
                        config.style.plugin.as_deref(),
                        &triple,
                        &workdir,
                        Duration::from_secs_f64(config.style.timeout_secs),
                        scene_pkg.decode_gamma,
                        n,
                    )
                    .map_err(|e| PipelineError::stage_frame("refine", n, e))
                })
                .collect()
        });
        for (composite, rgb) in composites.iter_mut().zip(refined) {
            composite.rgb = rgb?;
        }
    }

    // --- write ------------------------------------------------------------
    if let Some(diags) = &stab_diag {
        let mut csv = String::from("frame,anchors,rms_before,rms_after,refined\n");
        for d in diags {
            use std::fmt::Write as _;
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                d.frame, d.anchors_used, d.rms_before, d.rms_after, d.refined
            );
        }
        std::fs::write(config.output_dir.join("stabilize_residuals.csv"), csv)
            .map_err(|e| PipelineError::stage("write", e))?;
    }

    let placement_records: Vec<PlacementRecord> = track
        .entries
        .iter()
        .enumerate()
        .map(|(frame, e)| PlacementRecord {
            frame,
            pixel: [e.pixel.x, e.pixel.y],
            depth: e.depth,
            visible: e.visible,
            valid_class: e.valid_class,
        })
        .collect();
    let mut stages = BTreeMap::new();
    stages.insert("stabilize".to_string(), config.stabilization.enabled);
    stages.insert("shadow".to_string(), config.render.shadow);
    stages.insert("refine".to_string(), config.style.refine);
    stages.insert(
        "refine_plugin".to_string(),
        config.style.plugin.is_some(),
    );
    let meta = RunMeta {
        config_hash: config.config_hash(),
        seed: config.render.seed,
        encode_gamma: scene_pkg.decode_gamma,
        placement: placement_records,
        warnings: warnings.clone(),
        stages,
        effective_config: serde_json::to_value(config).expect("config serializes"),
    };
    let run_manifest = scene::write_outputs(&config.output_dir, &composites, meta)
        .map_err(|e| PipelineError::stage("write", e))?;

    Ok(RunSummary {
        run_manifest,
        warnings,
        track,
    })
}

/// Helper for the demo and tests: a full config over the bundled synthetic
/// assets written under `dir`.
pub fn demo_config(dir: &Path) -> Result<PipelineConfig, PipelineError> {
    let spec = crate::synthetic::SyntheticSceneSpec::default();
    let (manifest, mesh, pano) = crate::synthetic::write_demo_assets(dir, &spec)
        .map_err(|e| PipelineError::stage("load", e))?;
    Ok(PipelineConfig {
        scene_manifest: manifest,
        mesh,
        output_dir: dir.join("out"),
        placement: PlacementConfig {
            strategy: PlacementStrategy::FutureCamera,
            allowed_classes: vec!["road".to_string()],
            yaw: 0.0,
            ground_offset: 0.35,
        },
        stabilization: StabilizationConfig {
            anchor_search_radius: 8.0,
            ..Default::default()
        },
        lighting: LightingConfig {
            ldr_panorama: Some(pano),
            ..Default::default()
        },
        render: RenderConfig {
            samples: 32,
            shadow_samples: 8,
            ..Default::default()
        },
        style: StyleConfig::default(),
        jobs: 0,
    })
}
