//! Per-frame detection pipeline: thresholding into a line mask, then one of
//! four line-extraction methods over it.
//!
//! - `naive`: fixed HSV range, boundary edges, raw Hough peaks (no
//!   suppression, no thinning) — the baseline that splits thick lines.
//! - `centroid`: coverage-driven slicing, per-slice centroids, RANSAC.
//! - `skeleton`: Zhang-Suen thinning, Hough, 5° clustering.
//! - `combined`: centroid and skeleton outputs fused.

use crate::centroid;
use crate::control::ControlConfig;
use crate::error::Result;
use crate::geom::ScoredLine;
use crate::raster::{rgb_to_hsv, BitMask, Raster};
use crate::skeleton::{self, HoughParams};
use crate::strategy::StrategyConfig;
use crate::threshold::{self, ClassifierModel, HsvRange};
use crate::tracking::{fuse_detections, TrackerConfig};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Line-extraction method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectMethod {
    Naive,
    Centroid,
    Skeleton,
    Combined,
}

impl DetectMethod {
    pub const ALL: [DetectMethod; 4] =
        [DetectMethod::Naive, DetectMethod::Centroid, DetectMethod::Skeleton, DetectMethod::Combined];

    pub fn name(&self) -> &'static str {
        match self {
            DetectMethod::Naive => "naive",
            DetectMethod::Centroid => "centroid",
            DetectMethod::Skeleton => "skeleton",
            DetectMethod::Combined => "combined",
        }
    }
}

impl std::str::FromStr for DetectMethod {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(DetectMethod::Naive),
            "centroid" => Ok(DetectMethod::Centroid),
            "skeleton" => Ok(DetectMethod::Skeleton),
            "combined" => Ok(DetectMethod::Combined),
            other => Err(crate::Error::invalid(format!("unknown method {other:?}"))),
        }
    }
}

/// How pixels are labelled line vs floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ThresholdMode {
    Range { range: HsvRange },
    Model { model: ClassifierModel },
}

/// Default range for the default world's yellow guide line. The V floor is
/// kept low so brightness drops to half still segment.
pub fn default_line_range() -> HsvRange {
    HsvRange { h_min: 30, h_max: 55, s_min: 120, s_max: 255, v_min: 60, v_max: 255 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdConfig {
    #[serde(flatten)]
    pub mode: ThresholdMode,
    /// Minimum component area at 1920×1080; scaled by image area.
    pub min_seed_area_base: u32,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig { mode: ThresholdMode::Range { range: default_line_range() }, min_seed_area_base: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    /// Hough discretization; `None` derives the vote threshold from the
    /// image diagonal.
    pub hough: Option<HoughParams>,
    pub cluster_theta_deg: f64,
    pub cluster_rho_px: f64,
    pub ransac_tol_px: f64,
    pub ransac_max_iters: u32,
    /// Manual range for the naive baseline (its thresholding never uses the
    /// trained model).
    pub naive_range: HsvRange,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            hough: None,
            cluster_theta_deg: 5.0,
            cluster_rho_px: 20.0,
            // Wide enough to re-merge the split centroid columns a slice
            // boundary produces on mission-scale line widths.
            ransac_tol_px: 6.0,
            ransac_max_iters: 100,
            naive_range: default_line_range(),
        }
    }
}

/// Everything the perception-to-control stack needs, JSON-loadable.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub threshold: ThresholdConfig,
    pub detect: DetectConfig,
    pub tracker: TrackerConfig,
    pub control: ControlConfig,
    pub strategy: StrategyConfig,
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

/// Pixels of the mask with at least one unset 4-neighbour (image borders
/// count as unset): the edge image the naive baseline feeds to Hough.
pub fn boundary_mask(mask: &BitMask) -> BitMask {
    let (w, h) = (mask.width(), mask.height());
    BitMask::from_fn(w, h, |x, y| {
        if !mask.get(x, y) {
            return false;
        }
        let (xi, yi) = (x as i64, y as i64);
        !(mask.get_clipped(xi - 1, yi)
            && mask.get_clipped(xi + 1, yi)
            && mask.get_clipped(xi, yi - 1)
            && mask.get_clipped(xi, yi + 1))
    })
}

/// Output of one frame's detection.
#[derive(Debug, Clone)]
pub struct FrameAnalysis {
    /// Mask after thresholding and (for non-naive methods) region growing.
    pub mask: BitMask,
    /// Thinned skeleton, when the method produced one.
    pub skeleton: Option<BitMask>,
    pub lines: Vec<ScoredLine>,
    pub threshold_ms: f64,
    pub detect_ms: f64,
}

fn centroid_lines(mask: &BitMask, cfg: &DetectConfig, seed: u64) -> Result<Vec<ScoredLine>> {
    let grid = centroid::compute_slice_grid(mask);
    let points = centroid::extract_centroids(mask, grid);
    centroid::ransac_line_fit(&points, cfg.ransac_tol_px, cfg.ransac_max_iters, seed)
}

fn skeleton_lines(
    mask: &BitMask,
    cfg: &DetectConfig,
    hough: &HoughParams,
) -> (BitMask, Vec<ScoredLine>) {
    let thin = skeleton::zhang_suen_thin(mask);
    let peaks = skeleton::hough_lines(&thin, hough);
    let lines = skeleton::cluster_lines(&peaks, cfg.cluster_theta_deg, cfg.cluster_rho_px);
    (thin, lines)
}

/// Runs thresholding and the selected method over one RGB frame.
pub fn analyze_frame(
    rgb: &Raster,
    cfg: &PipelineConfig,
    method: DetectMethod,
    rng_seed: u64,
) -> Result<FrameAnalysis> {
    let (w, h) = (rgb.width(), rgb.height());
    let hough = cfg.detect.hough.unwrap_or_else(|| HoughParams::for_dims(w, h));

    let t0 = Instant::now();
    let hsv = rgb_to_hsv(rgb)?;
    let mask = if method == DetectMethod::Naive {
        // Manual range only, no learned model, no region growing.
        threshold::hsv_range_threshold(&hsv, &cfg.detect.naive_range)?
    } else {
        let raw = match &cfg.threshold.mode {
            ThresholdMode::Range { range } => threshold::hsv_range_threshold(&hsv, range)?,
            ThresholdMode::Model { model } => threshold::classify_pixels(&hsv, model)?,
        };
        let min_area = (cfg.threshold.min_seed_area_base as f64 * (w as f64 * h as f64)
            / (1920.0 * 1080.0))
            .round()
            .max(1.0) as u32;
        threshold::region_grow(&raw, min_area)
    };
    let threshold_ms = t0.elapsed().as_secs_f64() * 1e3;

    let t1 = Instant::now();
    let (skeleton_mask, lines) = match method {
        DetectMethod::Naive => {
            let edges = boundary_mask(&mask);
            let raw_params = HoughParams { nms_rho_cells: 0, nms_theta_cells: 0, ..hough };
            let mut peaks = skeleton::hough_lines(&edges, &raw_params);
            // Raw peaks without suppression flood the accumulator ridge;
            // keep the dominant cells (within half the strongest vote) the
            // way a fixed manual threshold would be tuned per scene.
            if let Some(top) = peaks.first().map(|l| l.support) {
                peaks.retain(|l| l.support * 2 >= top);
            }
            (None, peaks)
        }
        DetectMethod::Centroid => (None, centroid_lines(&mask, &cfg.detect, rng_seed)?),
        DetectMethod::Skeleton => {
            let (thin, lines) = skeleton_lines(&mask, &cfg.detect, &hough);
            (Some(thin), lines)
        }
        DetectMethod::Combined => {
            let c = centroid_lines(&mask, &cfg.detect, rng_seed)?;
            let (thin, s) = skeleton_lines(&mask, &cfg.detect, &hough);
            (Some(thin), fuse_detections(&c, &s, &cfg.tracker.gates))
        }
    };
    let detect_ms = t1.elapsed().as_secs_f64() * 1e3;

    Ok(FrameAnalysis { mask, skeleton: skeleton_mask, lines, threshold_ms, detect_ms })
}

/// JSON-lines record for a detected line, as written by the `detect`
/// subcommand and the dataset tools.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub rho: f64,
    pub theta_deg: f64,
    pub method: String,
    pub inliers: u32,
}

impl DetectionRecord {
    pub fn from_line(line: &ScoredLine, method: DetectMethod) -> Self {
        DetectionRecord {
            rho: line.line.rho,
            theta_deg: line.line.theta_deg,
            method: method.name().to_string(),
            inliers: line.support,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::LineClass;
    use crate::raster::hsv_to_rgb_px;

    /// A thick vertical yellow bar on a gray floor, in RGB.
    fn bar_frame(w: u32, h: u32, x0: u32, thickness: u32) -> Raster {
        let line = hsv_to_rgb_px(42, 230, 235);
        let floor = hsv_to_rgb_px(30, 25, 110);
        let mut img = Raster::new(w, h, 3);
        for y in 0..h {
            for x in 0..w {
                let c = if (x0..x0 + thickness).contains(&x) { line } else { floor };
                img.set_pixel(x, y, &[c.0, c.1, c.2]);
            }
        }
        img
    }

    #[test]
    fn all_methods_find_a_clean_bar() {
        // Bar placed mid-slice (coverage 1/16 ⇒ 8×8 grid, 40 px slices).
        let img = bar_frame(320, 240, 170, 20);
        let cfg = PipelineConfig::default();
        let truth = 170.0 + 19.0 / 2.0;
        for method in DetectMethod::ALL {
            let out = analyze_frame(&img, &cfg, method, 7).unwrap();
            assert!(!out.lines.is_empty(), "{method:?} found nothing");
            let top = out.lines[0];
            assert_eq!(top.line.classify(), LineClass::Vertical, "{method:?}");
            let (rho, _) = top.line.vertical_form();
            let tol = if method == DetectMethod::Naive { 12.0 } else { 2.0 };
            assert!(
                (rho - truth).abs() <= tol,
                "{method:?}: rho {rho} vs {truth}"
            );
        }
    }

    #[test]
    fn naive_splits_thick_lines_into_edges() {
        let img = bar_frame(320, 240, 140, 40);
        let cfg = PipelineConfig::default();
        let out = analyze_frame(&img, &cfg, DetectMethod::Naive, 7).unwrap();
        let center = 140.0 + 39.0 / 2.0;
        // Every strong naive peak hugs one of the two edges, ~20 px off
        // centre, never the centreline.
        let best = out.lines[0];
        let (rho, _) = best.line.vertical_form();
        assert!(
            (rho - center).abs() >= 15.0,
            "naive top peak unexpectedly near centre: {rho} vs {center}"
        );
    }

    #[test]
    fn combined_fuses_both_methods() {
        let img = bar_frame(320, 240, 170, 20);
        let cfg = PipelineConfig::default();
        let c = analyze_frame(&img, &cfg, DetectMethod::Centroid, 7).unwrap();
        let s = analyze_frame(&img, &cfg, DetectMethod::Skeleton, 7).unwrap();
        let f = analyze_frame(&img, &cfg, DetectMethod::Combined, 7).unwrap();
        assert!(!f.lines.is_empty());
        let (fr, _) = f.lines[0].line.vertical_form();
        let (cr, _) = c.lines[0].line.vertical_form();
        let (sr, _) = s.lines[0].line.vertical_form();
        assert!(fr >= cr.min(sr) - 1e-9 && fr <= cr.max(sr) + 1e-9, "fused between parents");
        assert!(f.skeleton.is_some());
    }

    #[test]
    fn boundary_of_solid_block_is_its_ring() {
        let m = BitMask::from_fn(10, 10, |x, y| (2..8).contains(&x) && (2..8).contains(&y));
        let edge = boundary_mask(&m);
        assert_eq!(edge.count(), 20, "6x6 block has a 20 px ring");
        assert!(!edge.get(4, 4));
        assert!(edge.get(2, 2));
    }

    #[test]
    fn config_round_trips_as_json() {
        let cfg = PipelineConfig::default();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: PipelineConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        // Partial configs fill with defaults.
        let partial: PipelineConfig = serde_json::from_str(r#"{"detect":{"ransac_tol_px":4.0}}"#).unwrap();
        assert_eq!(partial.detect.ransac_tol_px, 4.0);
        assert_eq!(partial.tracker, TrackerConfig::default());
    }

    #[test]
    fn detection_record_schema() {
        let rec = DetectionRecord {
            rho: 100.5,
            theta_deg: 1.0,
            method: "centroid".into(),
            inliers: 8,
        };
        assert_eq!(
            serde_json::to_string(&rec).unwrap(),
            r#"{"rho":100.5,"theta_deg":1.0,"method":"centroid","inliers":8}"#
        );
    }
}
