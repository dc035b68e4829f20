//! Closed-loop executor: render → threshold → detect → track → strategy →
//! PID → dynamics at a fixed rate, producing a fully deterministic trace.

use crate::control::{
    compute_errors, correct_line_offset, principal_vertical, ControlCommand, ErrorVector,
    OffsetScaleMode, PidBank,
};
use crate::error::Result;
use crate::geom::HessianLine;
use crate::pipeline::{analyze_frame, DetectMethod, PipelineConfig};
use crate::raster::BitMask;
use crate::sim::dynamics::{step_dynamics, DynamicsConfig};
use crate::sim::render::{render_camera, CameraIntrinsics, PerturbConfig, Pose};
use crate::sim::world::World;
use crate::skeleton::zhang_suen_thin;
use crate::strategy::{
    strategy_step, ControlMode, FrameInfo, MissionPlan, Phase, StrategyState, TurnSide,
};
use crate::tracking::{detect_nodes, LineTrack, LineTracker, TrackRecord, TurnFlag};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Everything a closed-loop run needs beyond the world and the plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub method: DetectMethod,
    pub pipeline: PipelineConfig,
    pub camera_width: u32,
    pub camera_height: u32,
    pub dynamics: DynamicsConfig,
    pub perturb: PerturbConfig,
    /// Control rate, Hz.
    pub rate_hz: f64,
    pub max_steps: u64,
    /// Mission altitude, metres.
    pub altitude_m: f64,
    /// Start offset from the first row's line, metres.
    pub start_lateral_m: f64,
    /// Start position along the row (shelf start is 0), metres.
    pub start_along_m: f64,
    /// Climb rate while recovering, m/s.
    pub recover_climb_rate: f64,
    /// Fraction of the frame height around centre fed to turn detection.
    pub turn_band_frac: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: DetectMethod::Combined,
            pipeline: PipelineConfig::default(),
            camera_width: 320,
            camera_height: 240,
            dynamics: DynamicsConfig::default(),
            perturb: PerturbConfig::default(),
            rate_hz: 20.0,
            max_steps: 60_000,
            altitude_m: 2.0,
            start_lateral_m: 0.0,
            start_along_m: 0.0,
            recover_climb_rate: 0.5,
            turn_band_frac: 0.10,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(f))?)
    }
}

/// How the run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionStatus {
    Success,
    Failed,
    MaxSteps,
}

/// Per-step record of the trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: u64,
    pub pose: Pose,
    pub phase: Phase,
    pub gt_lines: Vec<HessianLine>,
    pub gt_nodes: Vec<usize>,
    pub detections: Vec<[f64; 2]>,
    pub tracks: Vec<TrackRecord>,
    pub nodes: Vec<[f64; 2]>,
    pub turn: TurnFlag,
    pub errors: Option<ErrorVector>,
    pub cmd: ControlCommand,
    /// Node id whose dwell completed this step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub visited: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceSummary {
    pub status: MissionStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cause: Option<String>,
    pub visited: Vec<usize>,
    pub steps: u64,
    pub final_pose: Pose,
    /// SHA-256 over the serialized step records.
    pub digest: String,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
    pub summary: TraceSummary,
}

impl Trace {
    /// Writes `trace.jsonl` (steps, then the summary as the final record),
    /// `summary.json`, and the per-step control log `control.csv`.
    pub fn write_dir(&self, dir: impl AsRef<std::path::Path>) -> Result<()> {
        use std::io::Write;
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;

        let mut jsonl = std::io::BufWriter::new(std::fs::File::create(dir.join("trace.jsonl"))?);
        for step in &self.steps {
            serde_json::to_writer(&mut jsonl, step)?;
            writeln!(jsonl)?;
        }
        serde_json::to_writer(&mut jsonl, &serde_json::json!({ "summary": &self.summary }))?;
        writeln!(jsonl)?;

        serde_json::to_writer_pretty(
            std::fs::File::create(dir.join("summary.json"))?,
            &self.summary,
        )?;

        let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("control.csv"))?);
        writeln!(csv, "step,dx,dy,dtheta,roll_cmd,pitch_cmd,yaw_rate_cmd")?;
        for s in &self.steps {
            let e = s.errors.unwrap_or_default();
            writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                s.step, e.dx, e.dy, e.dtheta, s.cmd.roll_cmd, s.cmd.pitch_cmd, s.cmd.yaw_rate_cmd
            )?;
        }
        Ok(())
    }
}

fn derive_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 over the combined value.
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Rows from just behind the centre to `band_frac`·h ahead of it, for turn
/// detection: the decision concerns the junction the drone is about to
/// reach — arms receding behind (like the stub of the node just departed)
/// must not count, nor structures far ahead.
fn center_band(mask: &BitMask, band_frac: f64) -> BitMask {
    let h = mask.height();
    let ahead = (band_frac * h as f64) as i64;
    let behind_slack = (0.02 * h as f64) as i64;
    let cy = h as i64 / 2;
    let (y0, y1) = ((cy - behind_slack).max(0) as u32, ((cy + ahead) as u32).min(h - 1));
    BitMask::from_fn(mask.width(), h, |x, y| y >= y0 && y <= y1 && mask.get(x, y))
}

/// Runs the full loop. Deterministic in (world, plan, cfg, seed).
pub fn run_closed_loop(
    world: &World,
    plan: &MissionPlan,
    cfg: &RunConfig,
    rng_seed: u64,
) -> Result<Trace> {
    let intr = CameraIntrinsics::from_fov(cfg.camera_width, cfg.camera_height, world.spec.sigma_deg);
    let dt = 1.0 / cfg.rate_hz;
    let scale_k = |pose: &Pose| match cfg.pipeline.control.offset_scale {
        OffsetScaleMode::FocalPx => Some(intr.focal_px),
        OffsetScaleMode::Altitude => Some(pose.altitude_h),
        OffsetScaleMode::Off => None,
    };

    let mut pose = Pose::hovering(
        world.row_line_x(0) + cfg.start_lateral_m,
        cfg.start_along_m,
        cfg.altitude_m,
    );
    let mut tracker = LineTracker::new(cfg.pipeline.tracker);
    let mut pids = PidBank::default();
    let mut state = StrategyState::new();
    let mut steps: Vec<TraceStep> = Vec::new();
    let mut status = MissionStatus::MaxSteps;

    for step in 0..cfg.max_steps {
        let frame_seed = derive_seed(rng_seed, step);
        let gt = render_camera(world, &pose, &intr, &cfg.perturb, frame_seed);
        let analysis = analyze_frame(&gt.rendered, &cfg.pipeline, cfg.method, frame_seed)?;
        tracker.step(&analysis.lines)?;

        // Attitude-offset-corrected copies of the reported tracks.
        let corrected: Vec<LineTrack> = tracker
            .reported()
            .iter()
            .map(|t| {
                let mut c = **t;
                if let Some(k) = scale_k(&pose) {
                    let fixed = correct_line_offset(&t.line(), pose.roll, pose.pitch, k);
                    c.state.rho_est = fixed.rho;
                    c.state.theta_est = fixed.theta_deg;
                }
                c
            })
            .collect();
        let verticals: Vec<&LineTrack> =
            corrected.iter().filter(|t| t.class == crate::geom::LineClass::Vertical).collect();
        let horizontals: Vec<&LineTrack> =
            corrected.iter().filter(|t| t.class == crate::geom::LineClass::Horizontal).collect();
        let nodes = detect_nodes(
            &verticals.iter().map(|t| **t).collect::<Vec<_>>(),
            &horizontals.iter().map(|t| **t).collect::<Vec<_>>(),
            cfg.camera_width,
            cfg.camera_height,
        );

        // The vertical the loop steers by: the strategy's followed track
        // (previous frame's binding) when alive, else the principal.
        let followed: Option<&LineTrack> = state
            .followed_line
            .and_then(|id| corrected.iter().find(|t| t.id == id))
            .or_else(|| principal_vertical(&verticals));
        let lateral_error = followed.map(|t| {
            crate::strategy::center_offset_px(t, cfg.camera_width, cfg.camera_height)
        });
        let turn = match followed {
            Some(p) => {
                let skel = match &analysis.skeleton {
                    Some(s) => s.clone(),
                    None => zhang_suen_thin(&analysis.mask),
                };
                let banded = center_band(&skel, cfg.turn_band_frac);
                let flag = crate::tracking::detect_turn(&banded, &p.line(), 4.0);
                if std::env::var_os("GRIDNAV_DEBUG").is_some() && flag != TurnFlag::None {
                    let (rho, theta) = p.line().vertical_form();
                    let t = theta.to_radians();
                    let (mut l, mut r) = (0u64, 0u64);
                    for (x, y) in banded.set_pixels() {
                        let d = x as f64 * t.cos() + y as f64 * t.sin() - rho;
                        if d > 2.0 { r += 1; } else if d < -2.0 { l += 1; }
                    }
                    eprintln!("DBG s{} flag={:?} left={} right={} line=({:.1},{:.1})", step, flag, l, r, rho, theta);
                }
                flag
            }
            None => TurnFlag::None,
        };

        let info = FrameInfo {
            verticals: &verticals,
            horizontals: &horizontals,
            nodes: &nodes,
            turn,
            frame_w: cfg.camera_width,
            frame_h: cfg.camera_height,
            lateral_error_px: lateral_error,
        };
        let prev_phase = state.phase;
        let prev_visited = state.visited.len();
        let (next_state, mode) = strategy_step(&state, &info, dt, plan, world, &cfg.pipeline.strategy);
        state = next_state;
        if std::mem::discriminant(&state.phase) != std::mem::discriminant(&prev_phase) {
            pids.reset();
        }

        // Errors and command for this step.
        let mut errors: Option<ErrorVector> = None;
        let mut climb = 0.0;
        let cmd = if let Phase::Turning { side, .. } = state.phase {
            ControlCommand {
                yaw_rate_cmd: match side {
                    TurnSide::Right => -1.0,
                    TurnSide::Left => 1.0,
                },
                ..Default::default()
            }
        } else {
            match mode {
                ControlMode::Hold => ControlCommand::default(),
                ControlMode::Ascend => {
                    let cap = cfg.altitude_m + cfg.pipeline.strategy.recover_climb_m;
                    if pose.altitude_h < cap {
                        climb = (cfg.recover_climb_rate * dt).min(cap - pose.altitude_h);
                    }
                    ControlCommand::default()
                }
                ControlMode::TrackNode(node) => {
                    let v: Vec<&LineTrack> =
                        corrected.iter().filter(|t| t.id == node.vertical_track).collect();
                    let h: Vec<&LineTrack> =
                        corrected.iter().filter(|t| t.id == node.horizontal_track).collect();
                    let v = if v.is_empty() { verticals.clone() } else { v };
                    let e = compute_errors(&v, &h, cfg.camera_width, cfg.camera_height)?;
                    errors = Some(e);
                    pids.step(&cfg.pipeline.control, &e, dt)?
                }
                ControlMode::TrackLine { forward_bias_px } => {
                    let steer: Vec<&LineTrack> = state
                        .followed_line
                        .and_then(|id| corrected.iter().find(|t| t.id == id))
                        .into_iter()
                        .collect();
                    let steer = if steer.is_empty() { verticals.clone() } else { steer };
                    let mut e =
                        compute_errors(&steer, &[], cfg.camera_width, cfg.camera_height)?;
                    // Virtual forward line: a constant pull ahead.
                    e.dy = -forward_bias_px;
                    errors = Some(e);
                    pids.step(&cfg.pipeline.control, &e, dt)?
                }
            }
        };

        steps.push(TraceStep {
            step,
            pose,
            phase: state.phase,
            gt_lines: gt.lines.clone(),
            gt_nodes: gt.nodes.iter().map(|n| n.world_node).collect(),
            detections: analysis.lines.iter().map(|l| [l.line.rho, l.line.theta_deg]).collect(),
            tracks: corrected
                .iter()
                .map(|t| TrackRecord {
                    id: t.id,
                    class: t.class,
                    rho: t.state.rho_est,
                    theta_deg: t.state.theta_est,
                })
                .collect(),
            nodes: nodes.iter().map(|n| [n.x, n.y]).collect(),
            turn,
            errors,
            cmd,
            visited: (state.visited.len() > prev_visited).then(|| *state.visited.last().unwrap()),
        });

        match state.phase {
            Phase::Done => {
                status = MissionStatus::Success;
                break;
            }
            Phase::Failed => {
                status = MissionStatus::Failed;
                break;
            }
            _ => {}
        }

        pose = step_dynamics(&pose, &cmd, dt, &cfg.dynamics);
        pose.altitude_h += climb;
    }

    let mut hasher = Sha256::new();
    for s in &steps {
        hasher.update(serde_json::to_vec(s)?);
        hasher.update(b"\n");
    }
    let digest = format!("{:x}", hasher.finalize());

    let summary = TraceSummary {
        status,
        cause: (status == MissionStatus::Failed).then(|| "lost-line".to_string()),
        visited: state.visited.clone(),
        steps: steps.len() as u64,
        final_pose: pose,
        digest,
    };
    Ok(Trace { steps, summary })
}
