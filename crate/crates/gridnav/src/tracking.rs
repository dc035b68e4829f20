//! Temporal scene interpretation: a constant-position Kalman filter per line
//! over (ρ, θ), greedy gated association of detections to tracks, fusion of
//! the centroid and skeleton detector outputs, node (vertical × horizontal)
//! intersection, and L-turn detection.
//!
//! All angular residuals are wrap-aware: a track at θ = 0° treats
//! measurements at 1° and 179° as +1° and −1°, never as a 179° jump.

use crate::error::{Error, Result};
use crate::geom::{HessianLine, LineClass, Point, ScoredLine};
use crate::raster::BitMask;
use serde::{Deserialize, Serialize};

/// Kalman noise configuration, applied per component (px² for ρ, deg² for θ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanConfig {
    /// Process noise added to the covariance each step.
    pub q: f64,
    /// Measurement noise.
    pub r: f64,
    /// Initial covariance of a freshly spawned track.
    pub p0: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        KalmanConfig { q: 0.5, r: 9.0, p0: 100.0 }
    }
}

/// Filter state for one line: the estimate in Hessian form plus a 2×2
/// covariance over (ρ, θ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanLineState {
    pub rho_est: f64,
    pub theta_est: f64,
    pub cov: [[f64; 2]; 2],
    pub q: f64,
    pub r: f64,
}

impl KalmanLineState {
    pub fn new(measurement: HessianLine, cfg: &KalmanConfig) -> Self {
        KalmanLineState {
            rho_est: measurement.rho,
            theta_est: measurement.theta_deg,
            cov: [[cfg.p0, 0.0], [0.0, cfg.p0]],
            q: cfg.q,
            r: cfg.r,
        }
    }

    pub fn estimate(&self) -> HessianLine {
        HessianLine::new(self.rho_est, self.theta_est)
    }

    fn check_psd(&self) -> Result<()> {
        let c = &self.cov;
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        if c[0][0] < -1e-9 || c[1][1] < -1e-9 || det < -1e-6 {
            return Err(Error::InternalState(format!(
                "covariance not PSD: [[{}, {}], [{}, {}]]",
                c[0][0], c[0][1], c[1][0], c[1][1]
            )));
        }
        Ok(())
    }
}

/// One predict-update cycle of the constant-position filter (F = I): the
/// prediction adds `q·I` to the covariance, the update applies the standard
/// gain `K = P(P + rI)⁻¹` with the θ residual wrapped to `(−90°, 90°]` and
/// the measurement's ρ sign aligned across the wrap.
pub fn kalman_update(
    state: &KalmanLineState,
    measurement: &HessianLine,
) -> Result<KalmanLineState> {
    state.check_psd()?;
    let mut p = state.cov;
    p[0][0] += state.q;
    p[1][1] += state.q;

    let est = state.estimate();
    let (meas_rho, delta_theta) = measurement.align_to(&est);
    let y = [meas_rho - est.rho, delta_theta];

    // S = P + rI, K = P S⁻¹.
    let s = [[p[0][0] + state.r, p[0][1]], [p[1][0], p[1][1] + state.r]];
    let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
    if det.abs() < 1e-300 {
        return Err(Error::InternalState("singular innovation covariance".into()));
    }
    let s_inv = [[s[1][1] / det, -s[0][1] / det], [-s[1][0] / det, s[0][0] / det]];
    let k = [
        [
            p[0][0] * s_inv[0][0] + p[0][1] * s_inv[1][0],
            p[0][0] * s_inv[0][1] + p[0][1] * s_inv[1][1],
        ],
        [
            p[1][0] * s_inv[0][0] + p[1][1] * s_inv[1][0],
            p[1][0] * s_inv[0][1] + p[1][1] * s_inv[1][1],
        ],
    ];

    let rho = est.rho + k[0][0] * y[0] + k[0][1] * y[1];
    let theta = est.theta_deg + k[1][0] * y[0] + k[1][1] * y[1];

    // P' = (I − K) P, symmetrized against round-off.
    let ik = [[1.0 - k[0][0], -k[0][1]], [-k[1][0], 1.0 - k[1][1]]];
    let mut cov = [[0.0f64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            cov[i][j] = ik[i][0] * p[0][j] + ik[i][1] * p[1][j];
        }
    }
    let off = 0.5 * (cov[0][1] + cov[1][0]);
    cov[0][1] = off;
    cov[1][0] = off;

    // Fold θ back into [0, 180), flipping ρ across the seam.
    let normalized = HessianLine::new(rho, theta);
    Ok(KalmanLineState {
        rho_est: normalized.rho,
        theta_est: normalized.theta_deg,
        cov,
        q: state.q,
        r: state.r,
    })
}

/// A tracked line. Tracks are reported once confirmed by two consecutive
/// detections and dropped after `max_age` frames without one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineTrack {
    pub id: u32,
    pub class: LineClass,
    pub state: KalmanLineState,
    pub frames_since_seen: u32,
    pub hits: u32,
    pub confirmed: bool,
    /// Support (votes/inliers) of the latest matched detection; proxies the
    /// visible line length, so guide lines outrank short stubs.
    pub support: u32,
}

impl LineTrack {
    pub fn line(&self) -> HessianLine {
        self.state.estimate()
    }
}

/// Association gates: a detection can match a track only within both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssociationGates {
    pub rho_gate: f64,
    pub theta_gate_deg: f64,
}

impl Default for AssociationGates {
    fn default() -> Self {
        AssociationGates { rho_gate: 60.0, theta_gate_deg: 15.0 }
    }
}

/// Result of matching detections to tracks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignments {
    /// `(track id, detection index)` pairs.
    pub matched: Vec<(u32, usize)>,
    pub unmatched_tracks: Vec<u32>,
    pub unmatched_detections: Vec<usize>,
}

/// Greedy nearest-neighbour association on the gated distance
/// `|Δρ|/ρ_gate + |Δθ|/θ_gate`, matching only within the same line class.
pub fn associate(
    tracks: &[LineTrack],
    detections: &[HessianLine],
    gates: &AssociationGates,
) -> Assignments {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ti, track) in tracks.iter().enumerate() {
        let tline = track.line();
        for (di, det) in detections.iter().enumerate() {
            if det.classify() != track.class {
                continue;
            }
            let (drho, dtheta) = tline.distance_to(det);
            if drho <= gates.rho_gate && dtheta <= gates.theta_gate_deg {
                pairs.push((drho / gates.rho_gate + dtheta / gates.theta_gate_deg, ti, di));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut track_used = vec![false; tracks.len()];
    let mut det_used = vec![false; detections.len()];
    let mut out = Assignments::default();
    for (_, ti, di) in pairs {
        if track_used[ti] || det_used[di] {
            continue;
        }
        track_used[ti] = true;
        det_used[di] = true;
        out.matched.push((tracks[ti].id, di));
    }
    out.unmatched_tracks =
        tracks.iter().zip(&track_used).filter(|(_, &u)| !u).map(|(t, _)| t.id).collect();
    out.unmatched_detections =
        (0..detections.len()).filter(|&i| !det_used[i]).collect();
    out
}

/// Fuses centroid-method and skeleton-method detections. Lines pairing
/// within the association gates merge with ρ weighted 2:1 toward the
/// centroid value and θ weighted 1:2 toward the skeleton value; unpaired
/// lines pass through unchanged.
pub fn fuse_detections(
    centroid_lines: &[ScoredLine],
    skeleton_lines: &[ScoredLine],
    gates: &AssociationGates,
) -> Vec<ScoredLine> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ci, c) in centroid_lines.iter().enumerate() {
        for (si, s) in skeleton_lines.iter().enumerate() {
            let (drho, dtheta) = c.line.distance_to(&s.line);
            if drho <= gates.rho_gate && dtheta <= gates.theta_gate_deg {
                pairs.push((drho / gates.rho_gate + dtheta / gates.theta_gate_deg, ci, si));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut c_used = vec![false; centroid_lines.len()];
    let mut s_used = vec![false; skeleton_lines.len()];
    let mut fused: Vec<(usize, ScoredLine)> = Vec::new();
    for (_, ci, si) in pairs {
        if c_used[ci] || s_used[si] {
            continue;
        }
        c_used[ci] = true;
        s_used[si] = true;
        let c = &centroid_lines[ci];
        let s = &skeleton_lines[si];
        let (s_rho, s_delta) = s.line.align_to(&c.line);
        let rho = (2.0 * c.line.rho + s_rho) / 3.0;
        let theta = c.line.theta_deg + 2.0 / 3.0 * s_delta;
        fused.push((
            ci,
            ScoredLine { line: HessianLine::new(rho, theta), support: c.support + s.support },
        ));
    }
    fused.sort_by_key(|&(ci, _)| ci);

    let mut out: Vec<ScoredLine> = fused.into_iter().map(|(_, l)| l).collect();
    out.extend(centroid_lines.iter().zip(&c_used).filter(|(_, &u)| !u).map(|(l, _)| *l));
    out.extend(skeleton_lines.iter().zip(&s_used).filter(|(_, &u)| !u).map(|(l, _)| *l));
    out
}

/// A grid node: the in-frame intersection of a vertical and a horizontal
/// track estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackedNode {
    pub x: f64,
    pub y: f64,
    pub vertical_track: u32,
    pub horizontal_track: u32,
}

/// Intersects every (vertical, horizontal) pair of track estimates and keeps
/// the intersections inside the frame. Near-parallel pairs are skipped.
pub fn detect_nodes(
    verticals: &[LineTrack],
    horizontals: &[LineTrack],
    width: u32,
    height: u32,
) -> Vec<TrackedNode> {
    let mut out = Vec::new();
    for v in verticals {
        for h in horizontals {
            if let Some(Point { x, y }) = v.line().intersection(&h.line()) {
                if x >= 0.0 && x < width as f64 && y >= 0.0 && y < height as f64 {
                    out.push(TrackedNode { x, y, vertical_track: v.id, horizontal_track: h.id });
                }
            }
        }
    }
    out
}

/// Which way the path turns at an L.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnFlag {
    None,
    Left,
    Right,
}

/// L-turn detection: counts skeleton pixels strictly left and right of the
/// vertical line (perpendicular distance beyond 2 px) and reports a turn
/// toward the heavy side when the imbalance reaches `ratio_threshold` and
/// the heavy side has at least 30 px. A node's cross has arms on both sides
/// and stays balanced; an L puts its whole arm on one side.
pub fn detect_turn(skeleton: &BitMask, vertical: &HessianLine, ratio_threshold: f64) -> TurnFlag {
    assert!(ratio_threshold > 1.0, "ratio_threshold must exceed 1");
    const DEAD_BAND: f64 = 2.0;
    const MIN_HEAVY: u64 = 30;

    // Express the line in vertical form so the positive normal always points
    // toward image +x (the drone's right).
    let (rho, theta) = vertical.vertical_form();
    let t = theta.to_radians();
    let (c, s) = (t.cos(), t.sin());

    let (mut left, mut right) = (0u64, 0u64);
    for (x, y) in skeleton.set_pixels() {
        let d = x as f64 * c + y as f64 * s - rho;
        if d > DEAD_BAND {
            right += 1;
        } else if d < -DEAD_BAND {
            left += 1;
        }
    }
    let (heavy, light, flag) =
        if right >= left { (right, left, TurnFlag::Right) } else { (left, right, TurnFlag::Left) };
    if heavy < MIN_HEAVY {
        return TurnFlag::None;
    }
    if light == 0 || heavy as f64 / light as f64 >= ratio_threshold {
        flag
    } else {
        TurnFlag::None
    }
}

/// Track lifecycle configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub kalman: KalmanConfig,
    pub gates: AssociationGates,
    /// Frames a confirmed track may coast unmatched before deletion.
    pub max_age: u32,
    /// Consecutive detections required before a track is reported.
    pub confirm_hits: u32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            kalman: KalmanConfig::default(),
            gates: AssociationGates::default(),
            max_age: 5,
            confirm_hits: 2,
        }
    }
}

/// Owns the track set and applies one detection frame at a time.
#[derive(Debug, Clone)]
pub struct LineTracker {
    cfg: TrackerConfig,
    tracks: Vec<LineTrack>,
    next_id: u32,
}

impl LineTracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        LineTracker { cfg, tracks: Vec::new(), next_id: 0 }
    }

    /// Associates, filters, spawns and ages. Strictly ordered by call.
    pub fn step(&mut self, detections: &[ScoredLine]) -> Result<()> {
        let lines: Vec<HessianLine> = detections.iter().map(|d| d.line).collect();
        let assignments = associate(&self.tracks, &lines, &self.cfg.gates);

        for &(tid, di) in &assignments.matched {
            let track = self.tracks.iter_mut().find(|t| t.id == tid).expect("matched id exists");
            track.state = kalman_update(&track.state, &lines[di])?;
            track.frames_since_seen = 0;
            track.hits += 1;
            track.support = detections[di].support;
            if track.hits >= self.cfg.confirm_hits {
                track.confirmed = true;
            }
        }

        let unmatched: std::collections::HashSet<u32> =
            assignments.unmatched_tracks.iter().copied().collect();
        self.tracks.retain_mut(|t| {
            if !unmatched.contains(&t.id) {
                return true;
            }
            if !t.confirmed {
                // An unconfirmed track missing a frame loses its streak.
                return false;
            }
            t.frames_since_seen += 1;
            t.hits = 0;
            t.frames_since_seen <= self.cfg.max_age
        });

        for &di in &assignments.unmatched_detections {
            let confirmed = self.cfg.confirm_hits <= 1;
            self.tracks.push(LineTrack {
                id: self.next_id,
                class: lines[di].classify(),
                state: KalmanLineState::new(lines[di], &self.cfg.kalman),
                frames_since_seen: 0,
                hits: 1,
                confirmed,
                support: detections[di].support,
            });
            self.next_id += 1;
        }
        Ok(())
    }

    /// Confirmed tracks, in stable id order.
    pub fn reported(&self) -> Vec<&LineTrack> {
        self.tracks.iter().filter(|t| t.confirmed).collect()
    }

    pub fn reported_of(&self, class: LineClass) -> Vec<&LineTrack> {
        self.tracks.iter().filter(|t| t.confirmed && t.class == class).collect()
    }

    pub fn all_tracks(&self) -> &[LineTrack] {
        &self.tracks
    }

    pub fn clear(&mut self) {
        self.tracks.clear();
    }
}

/// One line of the per-frame track dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackRecord {
    pub id: u32,
    pub class: LineClass,
    pub rho: f64,
    pub theta_deg: f64,
}

/// JSON-lines record written per frame by the closed-loop runner.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameTrackDump {
    pub frame: u64,
    pub tracks: Vec<TrackRecord>,
    pub nodes: Vec<[f64; 2]>,
    pub turn: TurnFlag,
}
