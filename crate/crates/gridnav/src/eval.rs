//! Evaluation harness: synthetic dataset generation with exact ground
//! truth, per-method Δr/Δα comparison against that truth, and detection
//! throughput benchmarks.

use crate::error::{Error, Result};
use crate::geom::HessianLine;
use crate::pipeline::{analyze_frame, DetectMethod, PipelineConfig};
use crate::raster::{pnm, Raster};
use crate::sim::{
    generate_world, render_camera, CameraIntrinsics, GtNode, PerturbConfig, Pose, World, WorldSpec,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Sampling ranges for dataset perturbations and poses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbRanges {
    pub blur_sigma: (f64, f64),
    pub brightness_gain: (f64, f64),
    pub speck_density: (f64, f64),
    pub occlusion_rects_max: u32,
    pub occlusion_max_frac: f64,
}

impl Default for PerturbRanges {
    fn default() -> Self {
        PerturbRanges {
            blur_sigma: (0.0, 1.5),
            brightness_gain: (0.75, 1.3),
            speck_density: (0.0, 0.002),
            occlusion_rects_max: 2,
            occlusion_max_frac: 0.12,
        }
    }
}

impl PerturbRanges {
    pub fn none() -> Self {
        PerturbRanges {
            blur_sigma: (0.0, 0.0),
            brightness_gain: (1.0, 1.0),
            speck_density: (0.0, 0.0),
            occlusion_rects_max: 0,
            occlusion_max_frac: 0.0,
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> PerturbConfig {
        let pick = |(lo, hi): (f64, f64), rng: &mut dyn rand::RngCore| {
            if hi > lo {
                lo + (hi - lo) * rand::Rng::gen::<f64>(rng)
            } else {
                lo
            }
        };
        PerturbConfig {
            blur_sigma: pick(self.blur_sigma, rng),
            brightness_gain: pick(self.brightness_gain, rng),
            speck_density: pick(self.speck_density, rng),
            occlusion_rects: if self.occlusion_rects_max > 0 {
                rng.gen_range(0..=self.occlusion_rects_max)
            } else {
                0
            },
            occlusion_max_frac: self.occlusion_max_frac,
        }
    }
}

/// Dataset generation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub world: WorldSpec,
    pub world_seed: u64,
    pub camera_width: u32,
    pub camera_height: u32,
    pub n_images: u32,
    pub altitude_range: (f64, f64),
    /// |roll|, |pitch| sampled within this bound, degrees.
    pub attitude_max_deg: f64,
    pub yaw_max_deg: f64,
    /// Lateral offset from the followed line, metres.
    pub lateral_max_m: f64,
    pub perturb: PerturbRanges,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            world: WorldSpec::with_fov(90.0, 0.6, 1, 4),
            world_seed: 1,
            camera_width: 1920,
            camera_height: 1080,
            n_images: 50,
            altitude_range: (1.5, 3.0),
            attitude_max_deg: 8.0,
            yaw_max_deg: 12.0,
            lateral_max_m: 0.35,
            perturb: PerturbRanges::default(),
        }
    }
}

/// Ground-truth sidecar written next to each frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub pose: Pose,
    pub camera: CameraIntrinsics,
    pub lines: Vec<HessianLine>,
    pub nodes: Vec<GtNode>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestFrame {
    pub image: String,
    pub truth: String,
}

/// Dataset manifest: everything needed to reproduce or consume the corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: DatasetConfig,
    pub frames: Vec<ManifestFrame>,
}

fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn sample_pose(world: &World, cfg: &DatasetConfig, rng: &mut ChaCha8Rng) -> Pose {
    let row = rng.gen_range(0..world.spec.shelf_rows);
    let (y0, y1) = world.line_y_range;
    Pose {
        x: world.row_line_x(row) + rng.gen_range(-cfg.lateral_max_m..=cfg.lateral_max_m),
        y: rng.gen_range(y0..=y1),
        altitude_h: rng.gen_range(cfg.altitude_range.0..=cfg.altitude_range.1),
        roll: rng.gen_range(-cfg.attitude_max_deg..=cfg.attitude_max_deg),
        pitch: rng.gen_range(-cfg.attitude_max_deg..=cfg.attitude_max_deg),
        yaw: rng.gen_range(-cfg.yaw_max_deg..=cfg.yaw_max_deg),
    }
}

/// Renders `n_images` frames with ground-truth sidecars and a manifest into
/// `out_dir`. Fully deterministic in (config, seed).
pub fn gen_dataset(cfg: &DatasetConfig, out_dir: impl AsRef<Path>, rng_seed: u64) -> Result<Manifest> {
    if cfg.n_images < 1 {
        return Err(Error::invalid("dataset needs at least one image"));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let world = generate_world(&cfg.world, cfg.world_seed)?;
    let intr = CameraIntrinsics::from_fov(cfg.camera_width, cfg.camera_height, cfg.world.sigma_deg);

    let mut pose_rng = ChaCha8Rng::seed_from_u64(derive_seed(rng_seed, 0xA11CE));
    let mut frames = Vec::with_capacity(cfg.n_images as usize);
    for i in 0..cfg.n_images {
        let pose = sample_pose(&world, cfg, &mut pose_rng);
        let perturb = cfg.perturb.sample(&mut pose_rng);
        let frame_seed = derive_seed(rng_seed, 1 + i as u64);
        let gt = render_camera(&world, &pose, &intr, &perturb, frame_seed);

        let image = format!("frame_{i:04}.ppm");
        let truth = format!("frame_{i:04}.json");
        pnm::write_file(&gt.rendered, out_dir.join(&image))?;
        let sidecar =
            TruthSidecar { pose, camera: intr, lines: gt.lines.clone(), nodes: gt.nodes.clone() };
        serde_json::to_writer(std::fs::File::create(out_dir.join(&truth))?, &sidecar)?;
        frames.push(ManifestFrame { image, truth });
    }

    let manifest = Manifest { seed: rng_seed, config: cfg.clone(), frames };
    serde_json::to_writer_pretty(
        std::fs::File::create(out_dir.join("manifest.json"))?,
        &manifest,
    )?;
    Ok(manifest)
}

/// A dataset loaded into memory (images decoded, truth parsed).
pub struct Dataset {
    pub manifest: Manifest,
    pub frames: Vec<(Raster, TruthSidecar)>,
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.exists() {
        return Err(Error::InvalidDataset(format!("no manifest.json under {}", dir.display())));
    }
    let manifest: Manifest = serde_json::from_reader(std::fs::File::open(manifest_path)?)?;
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for f in &manifest.frames {
        let img = pnm::read_file(dir.join(&f.image))?;
        let truth_path = dir.join(&f.truth);
        if !truth_path.exists() {
            return Err(Error::InvalidDataset(format!("missing ground truth {}", f.truth)));
        }
        let truth: TruthSidecar = serde_json::from_reader(std::fs::File::open(truth_path)?)?;
        frames.push((img, truth));
    }
    Ok(Dataset { manifest, frames })
}

/// Matching gates for detection ↔ ground truth: wide enough that even the
/// naive method's half-thickness offsets count as matches, not misses.
pub const MATCH_RHO_GATE: f64 = 100.0;
pub const MATCH_THETA_GATE: f64 = 20.0;

/// One matched pair's absolute errors.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PairError {
    pub d_rho: f64,
    pub d_theta: f64,
}

/// Per-image evaluation record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageRecord {
    pub index: usize,
    pub pairs: Vec<PairError>,
    pub misses: usize,
    pub false_positives: usize,
}

/// Per-method aggregate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: DetectMethod,
    pub mean_d_rho: f64,
    pub mean_d_theta: f64,
    pub matched: usize,
    pub misses: usize,
    pub false_positives: usize,
    pub per_image: Vec<ImageRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub methods: Vec<MethodMetrics>,
}

impl MetricReport {
    pub fn method(&self, m: DetectMethod) -> Option<&MethodMetrics> {
        self.methods.iter().find(|x| x.method == m)
    }
}

/// Greedy gated matching of detections to ground-truth lines by normalized
/// wrap-aware distance; each side matches at most once.
pub fn match_lines(truth: &[HessianLine], detections: &[HessianLine]) -> (Vec<(usize, usize)>, Vec<usize>) {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ti, t) in truth.iter().enumerate() {
        for (di, d) in detections.iter().enumerate() {
            let (dr, dth) = t.distance_to(d);
            if dr <= MATCH_RHO_GATE && dth <= MATCH_THETA_GATE {
                pairs.push((dr / MATCH_RHO_GATE + dth / MATCH_THETA_GATE, ti, di));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut t_used = vec![false; truth.len()];
    let mut d_used = vec![false; detections.len()];
    let mut matched = Vec::new();
    for (_, ti, di) in pairs {
        if !t_used[ti] && !d_used[di] {
            t_used[ti] = true;
            d_used[di] = true;
            matched.push((ti, di));
        }
    }
    let unmatched_truth = (0..truth.len()).filter(|&i| !t_used[i]).collect();
    (matched, unmatched_truth)
}

/// Runs each method over the dataset and reports mean |Δr| and wrapped |Δα|
/// over matched pairs, with unmatched ground truth counted as misses.
pub fn evaluate(
    dataset: &Dataset,
    methods: &[DetectMethod],
    cfg: &PipelineConfig,
    rng_seed: u64,
) -> Result<MetricReport> {
    if dataset.frames.is_empty() {
        return Err(Error::InvalidDataset("dataset has no frames".into()));
    }
    let mut out = Vec::new();
    for &method in methods {
        let mut per_image = Vec::new();
        let (mut sum_r, mut sum_t, mut matched_n, mut misses, mut fps) = (0.0, 0.0, 0usize, 0usize, 0usize);
        for (i, (img, truth)) in dataset.frames.iter().enumerate() {
            let analysis = analyze_frame(img, cfg, method, derive_seed(rng_seed, i as u64))?;
            let det_lines: Vec<HessianLine> = analysis.lines.iter().map(|l| l.line).collect();
            let (pairs, unmatched_truth) = match_lines(&truth.lines, &det_lines);
            let mut rec = ImageRecord {
                index: i,
                pairs: Vec::with_capacity(pairs.len()),
                misses: unmatched_truth.len(),
                false_positives: det_lines.len() - pairs.len(),
            };
            for (ti, di) in pairs {
                let (dr, dth) = truth.lines[ti].distance_to(&det_lines[di]);
                rec.pairs.push(PairError { d_rho: dr, d_theta: dth });
                sum_r += dr;
                sum_t += dth;
                matched_n += 1;
            }
            misses += rec.misses;
            fps += rec.false_positives;
            per_image.push(rec);
        }
        out.push(MethodMetrics {
            method,
            mean_d_rho: if matched_n > 0 { sum_r / matched_n as f64 } else { f64::NAN },
            mean_d_theta: if matched_n > 0 { sum_t / matched_n as f64 } else { f64::NAN },
            matched: matched_n,
            misses,
            false_positives: fps,
            per_image,
        });
    }
    Ok(MetricReport { methods: out })
}

/// Throughput measurement of the detection pipeline (threshold → lines),
/// excluding all file I/O. Runs `warmup` untimed passes, then `reps` timed
/// passes over the whole in-memory dataset and reports the median.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub method: DetectMethod,
    pub image_width: u32,
    pub image_height: u32,
    pub frames: usize,
    pub warmup: u32,
    pub reps: u32,
    /// Median frames per second across reps.
    pub fps: f64,
    pub fps_per_rep: Vec<f64>,
    /// Median per-frame stage cost, milliseconds.
    pub threshold_ms: f64,
    pub detect_ms: f64,
}

pub fn benchmark_fps(
    dataset: &Dataset,
    method: DetectMethod,
    warmup: u32,
    reps: u32,
    cfg: &PipelineConfig,
) -> Result<BenchReport> {
    if reps < 3 {
        return Err(Error::invalid("benchmark needs at least 3 reps"));
    }
    if dataset.frames.is_empty() {
        return Err(Error::InvalidDataset("dataset has no frames".into()));
    }
    let (w, h) = (dataset.frames[0].0.width(), dataset.frames[0].0.height());

    for _ in 0..warmup {
        for (i, (img, _)) in dataset.frames.iter().enumerate() {
            std::hint::black_box(analyze_frame(img, cfg, method, i as u64)?);
        }
    }

    let mut fps_per_rep = Vec::with_capacity(reps as usize);
    let mut threshold_ms = Vec::new();
    let mut detect_ms = Vec::new();
    for _ in 0..reps {
        let t0 = std::time::Instant::now();
        for (i, (img, _)) in dataset.frames.iter().enumerate() {
            let analysis = std::hint::black_box(analyze_frame(img, cfg, method, i as u64)?);
            threshold_ms.push(analysis.threshold_ms);
            detect_ms.push(analysis.detect_ms);
        }
        let dt = t0.elapsed().as_secs_f64();
        fps_per_rep.push(dataset.frames.len() as f64 / dt);
    }
    let median = |v: &mut Vec<f64>| -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    let mut fps_sorted = fps_per_rep.clone();
    Ok(BenchReport {
        method,
        image_width: w,
        image_height: h,
        frames: dataset.frames.len(),
        warmup,
        reps,
        fps: median(&mut fps_sorted),
        fps_per_rep,
        threshold_ms: median(&mut threshold_ms),
        detect_ms: median(&mut detect_ms),
    })
}

/// Draws a line over an RGB raster (debug overlays for annotated frames).
pub fn draw_line(img: &mut Raster, line: &HessianLine, rgb: [u8; 3]) {
    let (w, h) = (img.width(), img.height());
    let t = line.theta_deg.to_radians();
    let (c, s) = (t.cos(), t.sin());
    let (px, py) = (line.rho * c, line.rho * s);
    let (dx, dy) = (-s, c);
    let steps = 2 * (w + h) as i64;
    for k in -steps..=steps {
        let x = px + dx * k as f64 * 0.5;
        let y = py + dy * k as f64 * 0.5;
        if x >= 0.0 && y >= 0.0 && (x as u32) < w && (y as u32) < h {
            img.set_pixel(x as u32, y as u32, &rgb);
        }
    }
}

/// Writes annotated copies of `trace`-style frames: detections over renders.
pub fn annotate_frame(rendered: &Raster, lines: &[HessianLine]) -> Raster {
    let mut out = rendered.clone();
    for line in lines {
        draw_line(&mut out, line, [255, 32, 32]);
    }
    out
}

/// Filenames for mission render dumps.
pub fn frame_filename(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("step_{step:06}.ppm"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> DatasetConfig {
        DatasetConfig {
            camera_width: 320,
            camera_height: 240,
            n_images: 4,
            perturb: PerturbRanges::default(),
            ..Default::default()
        }
    }

    #[test]
    fn dataset_generation_is_deterministic() {
        let cfg = tiny_config();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let ma = gen_dataset(&cfg, dir_a.path(), 7).unwrap();
        let mb = gen_dataset(&cfg, dir_b.path(), 7).unwrap();
        assert_eq!(serde_json::to_string(&ma).unwrap(), serde_json::to_string(&mb).unwrap());
        for f in &ma.frames {
            let a = std::fs::read(dir_a.path().join(&f.image)).unwrap();
            let b = std::fs::read(dir_b.path().join(&f.image)).unwrap();
            assert_eq!(a, b, "{} differs", f.image);
        }
        let mc = gen_dataset(&cfg, dir_a.path(), 8).unwrap();
        let a0 = std::fs::read(dir_a.path().join(&mc.frames[0].image)).unwrap();
        let b0 = std::fs::read(dir_b.path().join(&mb.frames[0].image)).unwrap();
        assert_ne!(a0, b0, "different seeds must differ");
    }

    #[test]
    fn unperturbed_truth_is_analytic() {
        let cfg = DatasetConfig {
            n_images: 1,
            camera_width: 320,
            camera_height: 240,
            perturb: PerturbRanges::none(),
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        gen_dataset(&cfg, dir.path(), 3).unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        let (_, truth) = &ds.frames[0];
        // Ground truth must carry finite normalized Hessian parameters.
        assert!(!truth.lines.is_empty());
        for l in &truth.lines {
            assert!(l.rho.is_finite());
            assert!((0.0..180.0).contains(&l.theta_deg));
        }
    }

    #[test]
    fn evaluate_is_method_order_independent() {
        let cfg = tiny_config();
        let dir = tempfile::tempdir().unwrap();
        gen_dataset(&cfg, dir.path(), 5).unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        let pipe = PipelineConfig::default();
        let a = evaluate(&ds, &[DetectMethod::Centroid, DetectMethod::Skeleton], &pipe, 1).unwrap();
        let b = evaluate(&ds, &[DetectMethod::Skeleton, DetectMethod::Centroid], &pipe, 1).unwrap();
        let ca = a.method(DetectMethod::Centroid).unwrap();
        let cb = b.method(DetectMethod::Centroid).unwrap();
        assert_eq!(ca.mean_d_rho.to_bits(), cb.mean_d_rho.to_bits());
        assert_eq!(ca.mean_d_theta.to_bits(), cb.mean_d_theta.to_bits());
    }

    #[test]
    fn report_means_match_per_image_records() {
        let cfg = tiny_config();
        let dir = tempfile::tempdir().unwrap();
        gen_dataset(&cfg, dir.path(), 9).unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        let report =
            evaluate(&ds, &[DetectMethod::Skeleton], &PipelineConfig::default(), 1).unwrap();
        let m = &report.methods[0];
        let (mut sr, mut st, mut n) = (0.0, 0.0, 0usize);
        for rec in &m.per_image {
            for p in &rec.pairs {
                sr += p.d_rho;
                st += p.d_theta;
                n += 1;
            }
        }
        assert!((m.mean_d_rho - sr / n as f64).abs() < 1e-9);
        assert!((m.mean_d_theta - st / n as f64).abs() < 1e-9);
    }

    #[test]
    fn clean_frames_have_tight_skeleton_errors() {
        let cfg = DatasetConfig {
            n_images: 6,
            camera_width: 320,
            camera_height: 240,
            attitude_max_deg: 0.0,
            perturb: PerturbRanges::none(),
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        gen_dataset(&cfg, dir.path(), 11).unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        let report =
            evaluate(&ds, &[DetectMethod::Skeleton], &PipelineConfig::default(), 1).unwrap();
        let m = &report.methods[0];
        assert!(m.matched > 0);
        assert!(m.mean_d_theta <= 1.5, "clean Δα = {}", m.mean_d_theta);
        assert!(m.mean_d_rho <= 3.0, "clean Δr = {}", m.mean_d_rho);
    }

    #[test]
    fn match_lines_respects_gates() {
        let truth = [HessianLine::new(100.0, 0.0)];
        let close = [HessianLine::new(130.0, 2.0)];
        let (m, u) = match_lines(&truth, &close);
        assert_eq!(m.len(), 1);
        assert!(u.is_empty());

        let far = [HessianLine::new(250.0, 0.0)];
        let (m, u) = match_lines(&truth, &far);
        assert!(m.is_empty());
        assert_eq!(u, vec![0]);
    }

    #[test]
    fn missing_manifest_is_invalid_dataset() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::InvalidDataset(_))));
    }

    #[test]
    fn bench_requires_three_reps() {
        let cfg = tiny_config();
        let dir = tempfile::tempdir().unwrap();
        gen_dataset(&cfg, dir.path(), 2).unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert!(benchmark_fps(&ds, DetectMethod::Skeleton, 0, 2, &PipelineConfig::default()).is_err());
        let rep = benchmark_fps(&ds, DetectMethod::Skeleton, 1, 3, &PipelineConfig::default()).unwrap();
        assert!(rep.fps > 0.0);
        assert_eq!(rep.fps_per_rep.len(), 3);
    }
}
