//! Batch video object-insertion pipeline.
//!
//! Subcommands run each stage on intermediate files; `simulate` chains the
//! whole pipeline. Exit codes: 0 success, 2 validation error, 3 stage
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;

use vcomp_core::lighting::{self, SunModelParams};
use vcomp_core::matrixio;
use vcomp_core::metrics;
use vcomp_core::pipeline::{self, PipelineConfig, PipelineError};
use vcomp_core::placement;
use vcomp_core::retrieval;
use vcomp_core::scene;
use vcomp_core::stabilize;

const EXIT_VALIDATION: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "vcomp", version, about = "Insert textured meshes into calibrated scene videos")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full insertion pipeline from a JSON config.
    Simulate(SimulateArgs),
    /// Compute and report the stabilized placement track for a scene.
    Stabilize(StabilizeArgs),
    /// Build an HDR environment map from an LDR panorama.
    Light(LightArgs),
    /// Cluster descriptor files into a visual-word index.
    RetrieveIndex(RetrieveIndexArgs),
    /// Query a visual-word index with a descriptor file.
    RetrieveQuery(RetrieveQueryArgs),
    /// Frechet distance between two feature files.
    Fid(FidArgs),
    /// Summarize a scene manifest, mesh, or panorama.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Pipeline config JSON; flags below override its fields.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Upper bound on concurrently running refinement plugins.
    #[arg(long)]
    max_plugin_jobs: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Skip pose re-optimization; emit the raw projection track.
    #[arg(long)]
    no_stabilize: bool,
    /// Skip shadow casting; shadow masks are all zero.
    #[arg(long)]
    no_shadow: bool,
    /// Skip the refinement stage entirely.
    #[arg(long)]
    no_refine: bool,
}

#[derive(Args)]
struct StabilizeArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Comma-separated allowed class names or ids.
    #[arg(long, value_delimiter = ',')]
    allowed: Vec<String>,
    #[arg(long, default_value_t = 16)]
    anchors: usize,
    #[arg(long, default_value_t = 3)]
    levels: usize,
    #[arg(long, default_value_t = 15)]
    window: usize,
    #[arg(long, default_value_t = 25.0)]
    anchor_radius: f64,
    /// Write the per-frame residual CSV here.
    #[arg(long)]
    residuals: Option<PathBuf>,
    /// Write the stabilized track JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LightArgs {
    /// Display-encoded (LDR) panorama, 2:1 aspect.
    #[arg(long)]
    ldr: Option<PathBuf>,
    /// JSON manifest of calibrated side views to stitch into the
    /// environment; the coverage mask lands next to the output.
    #[arg(long)]
    views: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    #[arg(long, default_value_t = 2.2)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 8.0)]
    peak_exponent: f64,
    /// Output EXR path for the blended environment.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RetrieveIndexArgs {
    /// Descriptor matrix files, one per video (id = file stem).
    #[arg(long, required = true, num_args = 1..)]
    descriptors: Vec<PathBuf>,
    #[arg(long, default_value_t = 16)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    idf: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RetrieveQueryArgs {
    #[arg(long)]
    index: PathBuf,
    /// Descriptor matrix file of the query video.
    #[arg(long)]
    query: PathBuf,
    #[arg(long, default_value_t = 5)]
    top: usize,
}

#[derive(Args)]
struct FidArgs {
    #[arg(long)]
    features_a: PathBuf,
    #[arg(long)]
    features_b: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    mesh: Option<PathBuf>,
    #[arg(long)]
    pano: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Stabilize(args) => stabilize_cmd(args),
        Command::Light(args) => light(args),
        Command::RetrieveIndex(args) => retrieve_index(args),
        Command::RetrieveQuery(args) => retrieve_query(args),
        Command::Fid(args) => fid(args),
        Command::Inspect(args) => inspect(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(CliError::Stage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_STAGE)
        }
    }
}

enum CliError {
    Validation(String),
    Stage(String),
}

impl From<PipelineError> for CliError {
    fn from(err: PipelineError) -> Self {
        match err {
            PipelineError::Validation(_) => CliError::Validation(err.to_string()),
            PipelineError::Stage { .. } => CliError::Stage(err.to_string()),
        }
    }
}

fn validation(err: impl std::fmt::Display) -> CliError {
    CliError::Validation(err.to_string())
}

fn stage(err: impl std::fmt::Display) -> CliError {
    CliError::Stage(err.to_string())
}

fn init_thread_pool(jobs: usize) {
    if jobs > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let mut config = PipelineConfig::from_path(&args.config)?;
    if let Some(scene) = args.scene {
        config.scene_manifest = scene;
    }
    if let Some(mesh) = args.mesh {
        config.mesh = mesh;
    }
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    if let Some(seed) = args.seed {
        config.render.seed = seed;
    }
    if let Some(jobs) = args.jobs {
        config.jobs = jobs;
    }
    if let Some(max_plugin_jobs) = args.max_plugin_jobs {
        config.style.max_plugin_jobs = max_plugin_jobs;
    }
    if let Some(samples) = args.samples {
        config.render.samples = samples;
    }
    if args.no_stabilize {
        config.stabilization.enabled = false;
    }
    if args.no_shadow {
        config.render.shadow = false;
    }
    if args.no_refine {
        config.style.refine = false;
    }
    init_thread_pool(config.jobs);

    let summary = pipeline::run_insert_pipeline(&config)?;
    for warning in &summary.warnings {
        eprintln!("warning: {warning}");
    }
    println!("{}", summary.run_manifest.display());
    Ok(())
}

fn stabilize_cmd(args: StabilizeArgs) -> Result<(), CliError> {
    let scene = scene::load_scene_package(&args.scene).map_err(validation)?;
    let allowed = scene.class_ids(&args.allowed).map_err(validation)?;
    let anchor =
        placement::select_placement_point(&scene, placement::PlacementStrategy::FutureCamera, &allowed)
            .map_err(stage)?;
    let raw = placement::build_track(&scene, &anchor, &allowed);
    let anchor_pt = Vector3::new(anchor.x, anchor.y, anchor.z);
    let anchors = stabilize::select_anchors(
        &scene,
        &allowed,
        args.anchors,
        Some(&anchor_pt),
        args.anchor_radius,
        7,
    )
    .map_err(stage)?;
    let flows = stabilize::consecutive_flows(&scene, args.levels, args.window);
    let tracked = stabilize::track_anchors(
        &scene,
        anchors,
        &flows,
        stabilize::DEFAULT_CONFIDENCE_THRESHOLD,
    );
    let result = stabilize::stabilize_track(
        &scene,
        &raw,
        &tracked,
        &allowed,
        &stabilize::RefineOptions::default(),
    );
    for warning in &result.warnings {
        eprintln!("warning: {warning}");
    }

    if let Some(path) = &args.residuals {
        let mut csv = String::from("frame,anchors,rms_before,rms_after,refined\n");
        for d in &result.diagnostics {
            use std::fmt::Write as _;
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                d.frame, d.anchors_used, d.rms_before, d.rms_after, d.refined
            );
        }
        std::fs::write(path, csv).map_err(stage)?;
    }

    let report = serde_json::json!({
        "anchor_world": [anchor.x, anchor.y, anchor.z],
        "frames": result
            .track
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                serde_json::json!({
                    "frame": i,
                    "raw_pixel": [raw.entries[i].pixel.x, raw.entries[i].pixel.y],
                    "pixel": [e.pixel.x, e.pixel.y],
                    "depth": e.depth,
                    "visible": e.visible,
                    "valid_class": e.valid_class,
                })
            })
            .collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&report).expect("report json");
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(stage)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn light(args: LightArgs) -> Result<(), CliError> {
    if args.ldr.is_none() && args.views.is_none() {
        return Err(CliError::Validation(
            "pass --ldr and/or --views".to_string(),
        ));
    }
    let params = SunModelParams::new(args.tau, args.beta).map_err(validation)?;

    // Sun + sky chain over the LDR panorama.
    let mut env: Option<lighting::HdrPanorama> = None;
    let mut sun_dir = None;
    if let Some(ldr_path) = &args.ldr {
        let ldr_linear =
            scene::raster::load_image_linear(ldr_path, args.gamma).map_err(validation)?;
        // The estimation chain works on display-encoded values.
        let ldr = ldr_linear.map(|p| {
            [
                (p[0].max(0.0) as f64).powf(1.0 / args.gamma) as f32,
                (p[1].max(0.0) as f64).powf(1.0 / args.gamma) as f32,
                (p[2].max(0.0) as f64).powf(1.0 / args.gamma) as f32,
            ]
        });
        let prob = lighting::detect_sun_fallback(&ldr, args.peak_exponent);
        let sun = lighting::sun_radiance_map(&prob, &params).map_err(stage)?;
        let sky = lighting::inverse_tone_map(&ldr, args.gamma, args.scale).map_err(stage)?;
        sun_dir = Some(prob.peak_direction());
        env = Some(lighting::blend_hdr(&sun, &sky).map_err(stage)?);
    }

    // Environmental radiance stitched from calibrated side views.
    let mut coverage_path = None;
    if let Some(views_path) = &args.views {
        let (views, height) =
            lighting::load_side_views(views_path, args.scale).map_err(validation)?;
        let height = env.as_ref().map(|e| e.height()).unwrap_or(height);
        let (stitched, coverage) =
            lighting::stitch_loaded_views(&views, height).map_err(stage)?;
        let cov_out = args.out.with_file_name(format!(
            "{}_coverage.exr",
            args.out.file_stem().and_then(|s| s.to_str()).unwrap_or("env")
        ));
        scene::raster::save_radiance(&cov_out, &coverage.map(|&v| [v; 3])).map_err(stage)?;
        coverage_path = Some(cov_out);
        env = Some(match env {
            Some(current) => lighting::blend_hdr(&current, &stitched).map_err(stage)?,
            None => stitched,
        });
    }

    let env = env.expect("validated above");
    if sun_dir.is_none() {
        let prob = lighting::detect_sun_fallback(&env.radiance, args.peak_exponent);
        sun_dir = Some(prob.peak_direction());
    }
    scene::raster::save_radiance(&args.out, &env.radiance).map_err(stage)?;
    let dir = sun_dir.expect("set above");
    let mut report = serde_json::json!({
        "environment": args.out.display().to_string(),
        "sun_direction": [dir.x, dir.y, dir.z],
        "peak_radiance": params.peak(),
    });
    if let Some(cov) = coverage_path {
        report["coverage_mask"] = serde_json::json!(cov.display().to_string());
    }
    println!("{report}");
    Ok(())
}

fn retrieve_index(args: RetrieveIndexArgs) -> Result<(), CliError> {
    let mut all: Vec<Vec<f32>> = Vec::new();
    let mut per_video: Vec<(String, matrixio::MatrixF32)> = Vec::new();
    for path in &args.descriptors {
        let matrix = matrixio::load_matrix(path).map_err(validation)?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| path.display().to_string());
        all.extend(matrix.rows.iter().cloned());
        per_video.push((id, matrix));
    }
    let vocab = retrieval::build_vocabulary(&all, args.k, args.seed).map_err(stage)?;
    let mut histograms = Vec::with_capacity(per_video.len());
    for (id, matrix) in &per_video {
        histograms.push(retrieval::encode_histogram(id, &matrix.rows, &vocab).map_err(stage)?);
    }
    let index = retrieval::RetrievalIndex {
        vocabulary: vocab,
        histograms,
        use_idf: args.idf,
    };
    index.save(&args.out).map_err(stage)?;
    println!(
        "{}",
        serde_json::json!({
            "index": args.out.display().to_string(),
            "videos": per_video.len(),
            "k": args.k,
            "inertia": index.vocabulary.inertia,
            "iterations": index.vocabulary.iterations,
        })
    );
    Ok(())
}

fn retrieve_query(args: RetrieveQueryArgs) -> Result<(), CliError> {
    let index = retrieval::RetrievalIndex::load(&args.index).map_err(validation)?;
    let matrix = matrixio::load_matrix(&args.query).map_err(validation)?;
    let query =
        retrieval::encode_histogram("query", &matrix.rows, &index.vocabulary).map_err(stage)?;
    let hits = index.query(&query, args.top);
    let report: Vec<_> = hits
        .iter()
        .map(|h| serde_json::json!({"video_id": h.video_id, "score": h.score}))
        .collect();
    println!("{}", serde_json::json!({ "hits": report }));
    Ok(())
}

fn fid(args: FidArgs) -> Result<(), CliError> {
    let a = matrixio::load_matrix(&args.features_a).map_err(validation)?;
    let b = matrixio::load_matrix(&args.features_b).map_err(validation)?;
    let stats_a = metrics::feature_stats(&a.rows).map_err(stage)?;
    let stats_b = metrics::feature_stats(&b.rows).map_err(stage)?;
    let fid = metrics::fid_score(&stats_a, &stats_b).map_err(stage)?;
    println!(
        "{}",
        serde_json::json!({
            "fid": fid,
            "n_a": a.len(),
            "n_b": b.len(),
            "d": a.dim,
        })
    );
    Ok(())
}

fn inspect(args: InspectArgs) -> Result<(), CliError> {
    let mut report = serde_json::Map::new();
    if let Some(path) = &args.scene {
        let scene = scene::load_scene_package(path).map_err(validation)?;
        report.insert(
            "scene".to_string(),
            serde_json::json!({
                "frames": scene.frame_count(),
                "n_target": scene.n_target,
                "n_reference": scene.n_reference,
                "width": scene.width(),
                "height": scene.height(),
                "frame_rate": scene.frame_rate,
                "classes": scene.class_names,
            }),
        );
    }
    if let Some(path) = &args.mesh {
        let mesh = scene::load_mesh(path).map_err(validation)?;
        let area: f64 = mesh.triangles.iter().map(|t| mesh.triangle_area(t)).sum();
        report.insert(
            "mesh".to_string(),
            serde_json::json!({
                "vertices": mesh.vertices.len(),
                "triangles": mesh.triangles.len(),
                "materials": mesh.materials.len(),
                "surface_area": area,
            }),
        );
    }
    if let Some(path) = &args.pano {
        let radiance = scene::raster::load_radiance(path).map_err(validation)?;
        let stats = metrics::frame_stats(&radiance);
        report.insert(
            "panorama".to_string(),
            serde_json::json!({
                "width": radiance.width(),
                "height": radiance.height(),
                "mean_rgb": stats.mean_rgb,
                "min": stats.min,
                "max": stats.max,
            }),
        );
    }
    if report.is_empty() {
        return Err(CliError::Validation(
            "nothing to inspect: pass --scene, --mesh, or --pano".to_string(),
        ));
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::Value::Object(report)).expect("report")
    );
    Ok(())
}
