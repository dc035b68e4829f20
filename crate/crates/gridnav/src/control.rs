//! Visual-servoing control: image-space errors from the tracked lines feed
//! three PID loops (lateral, forward, yaw), preceded by the attitude-induced
//! ρ offset correction and followed by velocity clipping to the command
//! range the platform accepts.

use crate::error::{Error, Result};
use crate::geom::wrap_half_turn;
use crate::tracking::LineTrack;
use serde::{Deserialize, Serialize};

/// Per-loop PID gains plus the anti-windup clamp for the integral term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Integral magnitude clamp.
    pub i_max: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        PidGains { kp: 0.0008, ki: 0.0001, kd: 0.0015, i_max: 2000.0 }
    }
}

/// Accumulated state of one PID loop.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: f64,
    pub initialized: bool,
}

/// One PID update: the integral accumulates `e·dt` (clamped to ±i_max), the
/// derivative uses the previous error or zero on the first call after a
/// reset, and the output is `kp·e + ki·∫e + kd·de/dt`.
pub fn pid_step(gains: &PidGains, state: &PidState, error: f64, dt: f64) -> Result<(f64, PidState)> {
    if !(dt > 0.0) {
        return Err(Error::invalid("pid_step requires dt > 0"));
    }
    let integral = (state.integral + error * dt).clamp(-gains.i_max, gains.i_max);
    let derivative = if state.initialized { (error - state.prev_error) / dt } else { 0.0 };
    let output = gains.kp * error + gains.ki * integral + gains.kd * derivative;
    Ok((output, PidState { integral, prev_error: error, initialized: true }))
}

/// Image-space feedback errors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorVector {
    /// Pixels; positive when the vertical line sits left of frame centre.
    pub dx: f64,
    /// Pixels; positive when the goal horizontal sits above frame centre.
    pub dy: f64,
    /// Degrees; grid rotation relative to perfect alignment.
    pub dtheta: f64,
}

/// Errors from the current tracks: `dx = w/2 − ρ` of the principal vertical,
/// `dy = h/2 − ρ` of the goal horizontal (the first track in `horizontals`;
/// zero when none), and `dθ` as the goal horizontal's deviation from its 90°
/// reference, falling back to the vertical's deviation from 0°/180°.
///
/// The principal vertical is the highest-confidence track: most hits, then
/// most recently seen, then nearest frame centre.
pub fn compute_errors(
    verticals: &[&LineTrack],
    horizontals: &[&LineTrack],
    frame_w: u32,
    frame_h: u32,
) -> Result<ErrorVector> {
    let (cx, cy) = (frame_w as f64 / 2.0, frame_h as f64 / 2.0);
    let principal = principal_vertical(verticals).ok_or(Error::LostLine)?;
    let (v_rho, v_theta) = principal.line().vertical_form();
    // ρ references the top-left origin, so a tilted line's ρ mixes tilt into
    // the lateral reading; evaluating the line at the centre row keeps dx
    // the drone-centred offset the loop needs (identical when θ = 0).
    let t = v_theta.to_radians();
    let x_at_center = (v_rho - cy * t.sin()) / t.cos();
    let dx = cx - x_at_center;

    let (dy, dtheta) = match horizontals.first() {
        Some(h) => {
            let line = h.line();
            let t = line.theta_deg.to_radians();
            let y_at_center = (line.rho - cx * t.cos()) / t.sin();
            (cy - y_at_center, wrap_half_turn(90.0 - line.theta_deg))
        }
        None => (0.0, wrap_half_turn(-v_theta)),
    };
    Ok(ErrorVector { dx, dy, dtheta })
}

/// Highest-confidence vertical track, if any: strongest support (longest
/// visible line) first, so a full-frame guide line outranks a node stub
/// crossing the view, then hit count, recency and id.
pub fn principal_vertical<'a>(verticals: &[&'a LineTrack]) -> Option<&'a LineTrack> {
    verticals.iter().copied().min_by(|a, b| {
        b.support
            .cmp(&a.support)
            .then(b.hits.cmp(&a.hits))
            .then(a.frames_since_seen.cmp(&b.frames_since_seen))
            .then(a.id.cmp(&b.id))
    })
}

/// Removes the attitude-induced shift from a measured ρ: a tilt of `t`
/// degrees moves the projected line by `scale_k · tan(t)` pixels, so the
/// corrected value is `ρ − scale_k·tan(t)`.
///
/// `scale_k` is the camera focal length in pixels under the pinhole
/// geometry; passing the altitude in metres instead reproduces the
/// uncompensated H·tan form for ablation.
pub fn correct_offset(rho: f64, tilt_angle_deg: f64, scale_k: f64) -> f64 {
    debug_assert!(tilt_angle_deg.abs() < 45.0, "tilt beyond ±45° is outside the model");
    // tan(|t|)·sign(t) keeps the correction exactly odd in the tilt, so
    // correcting by +a then −a is a bit-exact round trip.
    let t = tilt_angle_deg.abs().to_radians().tan();
    rho - scale_k * t * tilt_angle_deg.signum()
}

/// Offset correction for a line of arbitrary orientation: an image shift of
/// `(k·tan(roll), k·tan(pitch))` changes a line's ρ by the shift projected
/// onto the line normal. Reduces to [`correct_offset`] with the roll for
/// vertical lines and the pitch for horizontal ones.
pub fn correct_line_offset(
    line: &crate::geom::HessianLine,
    roll_deg: f64,
    pitch_deg: f64,
    scale_k: f64,
) -> crate::geom::HessianLine {
    let t = line.theta_deg.to_radians();
    let odd_tan = |a: f64| a.abs().to_radians().tan() * a.signum();
    let du = scale_k * odd_tan(roll_deg);
    let dv = scale_k * odd_tan(pitch_deg);
    crate::geom::HessianLine { rho: line.rho - (du * t.cos() + dv * t.sin()), theta_deg: line.theta_deg }
}

/// Which multiplier feeds [`correct_offset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetScaleMode {
    /// Pinhole-consistent: focal length in pixels.
    FocalPx,
    /// The altitude itself (metres), matching the uncorrected H·tan form.
    Altitude,
    /// No correction.
    Off,
}

/// Attitude and rate commands actually sent to the platform, degrees and
/// degrees/second, each within [−1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlCommand {
    pub roll_cmd: f64,
    pub pitch_cmd: f64,
    pub yaw_rate_cmd: f64,
}

/// Pre-clip velocity range of each PID output.
pub const VELOCITY_CLIP: f64 = 0.1;
/// Velocity-to-command scale: ±0.1 velocity maps onto ±1 command.
pub const COMMAND_SCALE: f64 = 10.0;

/// Clamps raw per-axis PID outputs to the velocity range [−0.1, 0.1], then
/// maps them linearly onto command degrees in [−1, 1]. Non-finite inputs
/// become zero.
pub fn clip_command(raw_roll: f64, raw_pitch: f64, raw_yaw_rate: f64) -> ControlCommand {
    let clip = |v: f64| {
        if v.is_finite() {
            v.clamp(-VELOCITY_CLIP, VELOCITY_CLIP) * COMMAND_SCALE
        } else {
            0.0
        }
    };
    ControlCommand {
        roll_cmd: clip(raw_roll),
        pitch_cmd: clip(raw_pitch),
        yaw_rate_cmd: clip(raw_yaw_rate),
    }
}

/// Gains and offset handling for the three loops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlConfig {
    pub gains_x: PidGains,
    pub gains_y: PidGains,
    pub gains_yaw: PidGains,
    pub offset_scale: OffsetScaleMode,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig {
            gains_x: PidGains { kp: 0.004, ki: 0.0002, kd: 0.006, i_max: 100.0 },
            gains_y: PidGains { kp: 0.004, ki: 0.0002, kd: 0.006, i_max: 100.0 },
            gains_yaw: PidGains { kp: 0.02, ki: 0.0, kd: 0.01, i_max: 50.0 },
            offset_scale: OffsetScaleMode::FocalPx,
        }
    }
}

/// The three loop states bundled, as owned by the closed-loop executor.
#[derive(Debug, Clone, Copy, Default)]
pub struct PidBank {
    pub x: PidState,
    pub y: PidState,
    pub yaw: PidState,
}

impl PidBank {
    pub fn reset(&mut self) {
        *self = PidBank::default();
    }

    /// Steps all three loops from an error vector and clips to a command.
    /// Sign conventions match the simulator's axes: positive dx (line left
    /// of centre) demands a negative roll command, and a positive dθ (grid
    /// rotated with the drone's yaw) demands a negative yaw rate.
    pub fn step(
        &mut self,
        cfg: &ControlConfig,
        err: &ErrorVector,
        dt: f64,
    ) -> Result<ControlCommand> {
        let (out_x, sx) = pid_step(&cfg.gains_x, &self.x, err.dx, dt)?;
        let (out_y, sy) = pid_step(&cfg.gains_y, &self.y, err.dy, dt)?;
        let (out_yaw, syaw) = pid_step(&cfg.gains_yaw, &self.yaw, err.dtheta, dt)?;
        self.x = sx;
        self.y = sy;
        self.yaw = syaw;
        Ok(clip_command(-out_x, -out_y, -out_yaw))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::HessianLine;
    use crate::tracking::{KalmanConfig, KalmanLineState};
    use proptest::prelude::*;

    #[test]
    fn pid_pure_proportional() {
        let gains = PidGains { kp: 2.0, ki: 0.0, kd: 0.0, i_max: 10.0 };
        let (out, _) = pid_step(&gains, &PidState::default(), 3.0, 0.05).unwrap();
        assert_eq!(out, 6.0);

        let (out, _) = pid_step(&gains, &PidState::default(), 0.0, 0.05).unwrap();
        assert_eq!(out, 0.0);
    }

    #[test]
    fn pid_integral_recursion() {
        let gains = PidGains { kp: 1.0, ki: 1.0, kd: 0.0, i_max: 100.0 };
        let mut state = PidState::default();
        let mut outs = Vec::new();
        for _ in 0..2 {
            let (o, s) = pid_step(&gains, &state, 2.0, 1.0).unwrap();
            outs.push(o);
            state = s;
        }
        assert_eq!(outs, vec![4.0, 6.0]);
    }

    #[test]
    fn pid_derivative_skips_first_call() {
        let gains = PidGains { kp: 0.0, ki: 0.0, kd: 1.0, i_max: 10.0 };
        let (out, state) = pid_step(&gains, &PidState::default(), 5.0, 0.5).unwrap();
        assert_eq!(out, 0.0, "first call has no derivative");
        let (out, _) = pid_step(&gains, &state, 6.0, 0.5).unwrap();
        assert_eq!(out, 2.0);
    }

    #[test]
    fn pid_rejects_bad_dt() {
        let gains = PidGains::default();
        assert!(pid_step(&gains, &PidState::default(), 1.0, 0.0).is_err());
        assert!(pid_step(&gains, &PidState::default(), 1.0, -0.1).is_err());
    }

    #[test]
    fn pid_clamps_integral() {
        let gains = PidGains { kp: 0.0, ki: 1.0, kd: 0.0, i_max: 3.0 };
        let mut state = PidState::default();
        for _ in 0..100 {
            let (_, s) = pid_step(&gains, &state, 10.0, 1.0).unwrap();
            state = s;
        }
        assert_eq!(state.integral, 3.0);
    }

    proptest! {
        #[test]
        fn pid_linear_in_error_when_pure_p(e in -1e4f64..1e4, scale in 0.1f64..10.0) {
            let gains = PidGains { kp: 0.5, ki: 0.0, kd: 0.0, i_max: 1.0 };
            let (a, _) = pid_step(&gains, &PidState::default(), e, 0.05).unwrap();
            let (b, _) = pid_step(&gains, &PidState::default(), e * scale, 0.05).unwrap();
            prop_assert!((b - a * scale).abs() <= 1e-9 * (1.0 + a.abs() * scale));
        }

        #[test]
        fn clipped_commands_always_in_range(r in any::<f64>(), p in any::<f64>(), y in any::<f64>()) {
            let cmd = clip_command(r, p, y);
            for v in [cmd.roll_cmd, cmd.pitch_cmd, cmd.yaw_rate_cmd] {
                prop_assert!(v.is_finite());
                prop_assert!((-1.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_command(0.5, 0.0, 0.0).roll_cmd, 1.0);
        assert_eq!(clip_command(-0.05, 0.0, 0.0).roll_cmd, -0.5);
        assert_eq!(clip_command(0.0, 0.0, 0.0), ControlCommand::default());
        assert_eq!(clip_command(f64::NAN, f64::INFINITY, -0.02).yaw_rate_cmd, -0.2);
        assert_eq!(clip_command(f64::NAN, 0.0, 0.0).roll_cmd, 0.0);
    }

    #[test]
    fn offset_correction_examples() {
        assert_eq!(correct_offset(123.0, 0.0, 700.0), 123.0);

        let corrected = correct_offset(1000.0, 5.0, 700.0);
        assert!((corrected - 938.76).abs() < 0.05, "got {corrected}");

        // Odd in the tilt, exactly.
        let rho = 517.25;
        let there = correct_offset(rho, 5.0, 700.0);
        let back = correct_offset(there, -5.0, 700.0);
        assert_eq!(back, rho);
    }

    #[test]
    fn line_offset_correction_matches_axis_cases() {
        let v = HessianLine::new(1000.0, 0.0);
        let corr = correct_line_offset(&v, 5.0, 3.0, 700.0);
        assert!((corr.rho - correct_offset(1000.0, 5.0, 700.0)).abs() < 1e-12);

        let h = HessianLine::new(500.0, 90.0);
        let corr = correct_line_offset(&h, 5.0, 3.0, 700.0);
        assert!((corr.rho - correct_offset(500.0, 3.0, 700.0)).abs() < 1e-12);
    }

    fn vtrack(id: u32, rho: f64, theta: f64, hits: u32) -> LineTrack {
        let line = HessianLine::new(rho, theta);
        LineTrack {
            id,
            class: line.classify(),
            state: KalmanLineState::new(line, &KalmanConfig::default()),
            frames_since_seen: 0,
            hits,
            confirmed: true,
            support: 40,
        }
    }

    #[test]
    fn errors_from_tracks() {
        // Centred vertical: dx = 0.
        let v = vtrack(0, 960.0, 0.0, 5);
        let e = compute_errors(&[&v], &[], 1920, 1080).unwrap();
        assert_eq!(e.dx, 0.0);
        assert_eq!(e.dy, 0.0);
        assert_eq!(e.dtheta, 0.0);

        // Horizontal at centre row with θ = 90: dy = 0 and dθ = 0.
        let h = vtrack(1, 540.0, 90.0, 5);
        let e = compute_errors(&[&v], &[&h], 1920, 1080).unwrap();
        assert!(e.dy.abs() < 1e-9);
        assert_eq!(e.dtheta, 0.0);

        // Off-centre vertical.
        let v2 = vtrack(2, 860.0, 0.0, 5);
        let e = compute_errors(&[&v2], &[], 1920, 1080).unwrap();
        assert!((e.dx - 100.0).abs() < 1e-9);

        // Vertical-only dθ uses the vertical's tilt.
        let v3 = vtrack(3, 860.0, 5.0, 5);
        let e = compute_errors(&[&v3], &[], 1920, 1080).unwrap();
        assert_eq!(e.dtheta, -5.0);

        // A vertical wrapped past 180° still yields the centre-row offset.
        let v4 = vtrack(4, -900.0, 179.0, 5);
        let e = compute_errors(&[&v4], &[], 1920, 1080).unwrap();
        let expect = 960.0 - (900.0 - 540.0 * (-1.0f64).to_radians().sin()) / (1.0f64).to_radians().cos();
        assert!((e.dx - expect).abs() < 1e-9, "dx {} vs {}", e.dx, expect);
        assert_eq!(e.dtheta, 1.0);

        // Tilt alone never masquerades as lateral offset: a line through the
        // centre at 5° yields dx = 0.
        let through_center = HessianLine::new(960.0 * (5.0f64).to_radians().cos()
            + 540.0 * (5.0f64).to_radians().sin(), 5.0);
        let v5 = vtrack(5, through_center.rho, through_center.theta_deg, 5);
        let e = compute_errors(&[&v5], &[], 1920, 1080).unwrap();
        assert!(e.dx.abs() < 1e-9, "dx {}", e.dx);

        assert!(matches!(compute_errors(&[], &[], 1920, 1080), Err(Error::LostLine)));
    }

    #[test]
    fn principal_vertical_prefers_confidence() {
        let a = vtrack(0, 900.0, 0.0, 2);
        let b = vtrack(1, 980.0, 0.0, 7);
        let p = principal_vertical(&[&a, &b]).unwrap();
        assert_eq!(p.id, 1);
    }
}
