//! Command-line front end. All functionality lives in the library; this
//! binary parses arguments, shuttles files, and maps errors to exit codes
//! (0 success, 2 invalid input, 3 mission failed).

use clap::{Args, Parser, Subcommand};
use gridnav::error::Error;
use gridnav::eval::{
    annotate_frame, benchmark_fps, evaluate, gen_dataset, load_dataset, DatasetConfig,
};
use gridnav::pipeline::{analyze_frame, DetectionRecord, DetectMethod, PipelineConfig};
use gridnav::raster::pnm;
use gridnav::sim::{generate_world, run_closed_loop, MissionStatus, RunConfig, WorldSpec};
use gridnav::strategy::{plan_mission, MissionSpec};
use gridnav::threshold::{read_samples_jsonl, train_pixel_classifier};
use std::io::Write;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "gridnav", about = "Grid-line detection and drone navigation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic ground-truth dataset.
    GenDataset(GenDatasetArgs),
    /// Detect lines in a single image, JSON-lines to stdout or a file.
    Detect(DetectArgs),
    /// Compare detection methods against a dataset's ground truth.
    Evaluate(EvaluateArgs),
    /// Measure detection throughput over a dataset.
    Bench(BenchArgs),
    /// Run a closed-loop simulated mission.
    SimRun(SimRunArgs),
    /// Train the line/floor pixel classifier from JSON-lines samples.
    TrainThreshold(TrainArgs),
}

#[derive(Args)]
struct GenDatasetArgs {
    /// Dataset config JSON; defaults describe a 1920×1080 single-row corpus.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Override the configured image count.
    #[arg(long)]
    n: Option<u32>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct DetectArgs {
    /// Input image (binary PPM/PGM).
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value = "combined")]
    method: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSON-lines path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated subset of naive,centroid,skeleton,combined.
    #[arg(long, default_value = "naive,centroid,skeleton,combined")]
    methods: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Report JSON path; stdout summary is always printed.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "skeleton")]
    method: String,
    #[arg(long, default_value_t = 1)]
    warmup: u32,
    #[arg(long, default_value_t = 5)]
    reps: u32,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimRunArgs {
    /// World spec JSON; defaults to a single-row demo world.
    #[arg(long)]
    world: Option<PathBuf>,
    #[arg(long)]
    world_seed: Option<u64>,
    /// Mission spec JSON ({"task":"scan","dwell_s":2.0,"rows":[...]}).
    #[arg(long)]
    mission: Option<PathBuf>,
    /// Run config JSON (camera, dynamics, pipeline, perturbations).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write annotated PPM frames every N steps.
    #[arg(long)]
    render_every: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Training samples, JSON-lines of {"hsv":[h,s,v],"label":1|-1}.
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, default_value_t = 200)]
    epochs: u32,
    #[arg(long, default_value_t = 1e-3)]
    reg: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn load_json<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T, Error> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let f = std::fs::File::open(p)?;
            Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
        }
    }
}

fn parse_methods(s: &str) -> Result<Vec<DetectMethod>, Error> {
    s.split(',').map(|m| m.trim().parse()).collect()
}

fn run() -> Result<i32, Error> {
    match Cli::parse().command {
        Command::GenDataset(a) => {
            let mut cfg: DatasetConfig = load_json(&a.config)?;
            if let Some(n) = a.n {
                cfg.n_images = n;
            }
            let manifest = gen_dataset(&cfg, &a.out, a.seed)?;
            println!("wrote {} frames to {}", manifest.frames.len(), a.out.display());
            Ok(0)
        }
        Command::Detect(a) => {
            let cfg: PipelineConfig = load_json(&a.config)?;
            let method: DetectMethod = a.method.parse()?;
            let img = pnm::read_file(&a.image)?;
            let img = match img.channels() {
                3 => img,
                // Promote grayscale to RGB so HSV conversion applies.
                _ => {
                    let mut rgb = gridnav::raster::Raster::new(img.width(), img.height(), 3);
                    for (i, &v) in img.data().iter().enumerate() {
                        rgb.data_mut()[i * 3..i * 3 + 3].fill(v);
                    }
                    rgb
                }
            };
            let analysis = analyze_frame(&img, &cfg, method, a.seed)?;
            let mut out: Box<dyn Write> = match &a.out {
                Some(p) => Box::new(std::fs::File::create(p)?),
                None => Box::new(std::io::stdout()),
            };
            for line in &analysis.lines {
                serde_json::to_writer(&mut out, &DetectionRecord::from_line(line, method))?;
                writeln!(out)?;
            }
            Ok(0)
        }
        Command::Evaluate(a) => {
            let cfg: PipelineConfig = load_json(&a.config)?;
            let methods = parse_methods(&a.methods)?;
            let dataset = load_dataset(&a.dataset)?;
            let report = evaluate(&dataset, &methods, &cfg, a.seed)?;
            println!("method      mean|Δr|px  mean|Δα|°  matched  misses  false+");
            for m in &report.methods {
                println!(
                    "{:<11} {:>9.2}  {:>8.2}  {:>7}  {:>6}  {:>6}",
                    m.method.name(),
                    m.mean_d_rho,
                    m.mean_d_theta,
                    m.matched,
                    m.misses,
                    m.false_positives
                );
            }
            if let Some(p) = &a.out {
                serde_json::to_writer_pretty(std::fs::File::create(p)?, &report)?;
            }
            Ok(0)
        }
        Command::Bench(a) => {
            let cfg: PipelineConfig = load_json(&a.config)?;
            let method: DetectMethod = a.method.parse()?;
            let dataset = load_dataset(&a.dataset)?;
            let report = benchmark_fps(&dataset, method, a.warmup, a.reps, &cfg)?;
            println!(
                "{} @ {}x{}: {:.2} fps (median of {} reps, {} frames; threshold {:.2} ms, detect {:.2} ms)",
                report.method.name(),
                report.image_width,
                report.image_height,
                report.fps,
                report.reps,
                report.frames,
                report.threshold_ms,
                report.detect_ms
            );
            if let Some(p) = &a.out {
                serde_json::to_writer_pretty(std::fs::File::create(p)?, &report)?;
            }
            Ok(0)
        }
        Command::SimRun(a) => {
            let world_spec: WorldSpec = load_json(&a.world)?;
            let mission: MissionSpec = load_json(&a.mission)?;
            let run_cfg: RunConfig = load_json(&a.config)?;
            let world = generate_world(&world_spec, a.world_seed.unwrap_or(1))?;
            let plan = plan_mission(&world, &mission)?;
            let trace = run_closed_loop(&world, &plan, &run_cfg, a.seed)?;
            trace.write_dir(&a.out)?;

            if let Some(every) = a.render_every {
                // Re-render the flown poses with detection overlays.
                let frames_dir = a.out.join("frames");
                std::fs::create_dir_all(&frames_dir)?;
                let intr = gridnav::sim::CameraIntrinsics::from_fov(
                    run_cfg.camera_width,
                    run_cfg.camera_height,
                    world.spec.sigma_deg,
                );
                for step in trace.steps.iter().step_by(every.max(1) as usize) {
                    let gt = gridnav::sim::render_camera(
                        &world,
                        &step.pose,
                        &intr,
                        &run_cfg.perturb,
                        0,
                    );
                    let lines: Vec<gridnav::geom::HessianLine> = step
                        .detections
                        .iter()
                        .map(|d| gridnav::geom::HessianLine::new(d[0], d[1]))
                        .collect();
                    let annotated = annotate_frame(&gt.rendered, &lines);
                    pnm::write_file(&annotated, gridnav::eval::frame_filename(&frames_dir, step.step))?;
                }
            }

            println!(
                "status: {:?}; visited {:?} in {} steps; trace digest {}",
                trace.summary.status,
                trace.summary.visited,
                trace.summary.steps,
                &trace.summary.digest[..16]
            );
            match trace.summary.status {
                MissionStatus::Success => Ok(0),
                _ => {
                    eprintln!(
                        "mission did not complete: {}",
                        trace.summary.cause.as_deref().unwrap_or("step budget exhausted")
                    );
                    Ok(3)
                }
            }
        }
        Command::TrainThreshold(a) => {
            let f = std::fs::File::open(&a.samples)?;
            let samples = read_samples_jsonl(std::io::BufReader::new(f))?;
            let positives: Vec<[u8; 3]> =
                samples.iter().filter(|s| s.label == 1).map(|s| s.hsv).collect();
            let negatives: Vec<[u8; 3]> =
                samples.iter().filter(|s| s.label == -1).map(|s| s.hsv).collect();
            let model = train_pixel_classifier(&positives, &negatives, a.epochs, a.reg, a.seed)?;
            model.save(&a.out)?;
            println!(
                "trained {} epochs on {}+{} samples; weights {:?}",
                a.epochs,
                positives.len(),
                negatives.len(),
                model.weights
            );
            Ok(0)
        }
    }
}

fn main() {
    match run() {
        Ok(code) => std::process::exit(code),
        Err(e @ Error::MissionFailed(_)) => {
            eprintln!("error: {e}");
            std::process::exit(3);
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    }
}
