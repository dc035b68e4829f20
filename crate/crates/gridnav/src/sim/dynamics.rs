//! First-order drone response: attitude tracks the command through a lag
//! with time constant τ, lateral velocity follows `k_v·tan(attitude)` in the
//! body frame, and yaw integrates the commanded rate. Altitude is held (a
//! barometer hold in still air); recovery climbs are applied by the runner.

use crate::control::ControlCommand;
use crate::sim::render::Pose;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsConfig {
    /// Lateral speed per unit tan(attitude), m/s.
    pub k_v: f64,
    /// Attitude lag time constant, seconds.
    pub tau_s: f64,
    /// Attitude hard limit, degrees.
    pub attitude_limit_deg: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig { k_v: 5.0, tau_s: 0.2, attitude_limit_deg: 10.0 }
    }
}

/// Advances the pose by `dt` under `cmd`.
pub fn step_dynamics(pose: &Pose, cmd: &ControlCommand, dt: f64, cfg: &DynamicsConfig) -> Pose {
    assert!(dt > 0.0, "dt must be positive");
    let alpha = 1.0 - (-dt / cfg.tau_s).exp();
    let lim = cfg.attitude_limit_deg;
    let roll = (pose.roll + (cmd.roll_cmd - pose.roll) * alpha).clamp(-lim, lim);
    let pitch = (pose.pitch + (cmd.pitch_cmd - pose.pitch) * alpha).clamp(-lim, lim);

    let mut yaw = pose.yaw + cmd.yaw_rate_cmd * dt;
    if yaw > 180.0 {
        yaw -= 360.0;
    } else if yaw <= -180.0 {
        yaw += 360.0;
    }

    // Body-frame velocity from the tilt, rotated into the world.
    let vx_body = cfg.k_v * roll.to_radians().tan();
    let vy_body = cfg.k_v * pitch.to_radians().tan();
    let (c, s) = (pose.yaw.to_radians().cos(), pose.yaw.to_radians().sin());
    let vx = c * vx_body - s * vy_body;
    let vy = s * vx_body + c * vy_body;

    Pose {
        x: pose.x + vx * dt,
        y: pose.y + vy * dt,
        altitude_h: pose.altitude_h,
        roll,
        pitch,
        yaw,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DT: f64 = 0.05;

    #[test]
    fn zero_command_decays_attitude_only() {
        let cfg = DynamicsConfig::default();
        let mut pose = Pose { roll: 4.0, ..Pose::hovering(1.0, 2.0, 2.0) };
        let start_alt = pose.altitude_h;
        for _ in 0..100 {
            pose = step_dynamics(&pose, &ControlCommand::default(), DT, &cfg);
        }
        assert!(pose.roll.abs() < 1e-6, "attitude decays to zero");
        assert_eq!(pose.altitude_h, start_alt);
        assert_eq!(pose.yaw, 0.0);
        // From rest + zero command the position never moves; with an initial
        // tilt the decay sweep costs a bounded displacement ≈ k_v·tan(4°)·τ.
        let drift = (pose.x - 1.0).abs();
        assert!(drift < 0.1, "drift {drift}");

        let mut still = Pose::hovering(1.0, 2.0, 2.0);
        still = step_dynamics(&still, &ControlCommand::default(), DT, &cfg);
        assert_eq!((still.x, still.y), (1.0, 2.0));
    }

    #[test]
    fn constant_roll_gives_linear_displacement() {
        let cfg = DynamicsConfig::default();
        let cmd = ControlCommand { roll_cmd: 1.0, ..Default::default() };
        let mut pose = Pose::hovering(0.0, 0.0, 2.0);
        let total_t = 10.0;
        let steps = (total_t / DT) as u32;
        for _ in 0..steps {
            pose = step_dynamics(&pose, &cmd, DT, &cfg);
        }
        // T ≫ τ: displacement ≈ k_v·tan(roll)·(T − τ).
        let expect = cfg.k_v * 1.0f64.to_radians().tan() * (total_t - cfg.tau_s);
        assert!(
            (pose.x - expect).abs() < 0.02 * expect.abs() + 0.01,
            "x {} vs {expect}",
            pose.x
        );
        assert_eq!(pose.y, 0.0);
    }

    #[test]
    fn yaw_integrates_rate() {
        let cfg = DynamicsConfig::default();
        let cmd = ControlCommand { yaw_rate_cmd: 1.0, ..Default::default() };
        let mut pose = Pose::hovering(0.0, 0.0, 2.0);
        for _ in 0..200 {
            pose = step_dynamics(&pose, &cmd, DT, &cfg);
        }
        assert!((pose.yaw - 10.0).abs() < 1e-9, "10 s at 1°/s: yaw {}", pose.yaw);
    }

    #[test]
    fn attitude_respects_limits() {
        let cfg = DynamicsConfig { tau_s: 0.01, ..Default::default() };
        let cmd = ControlCommand { roll_cmd: 50.0, ..Default::default() };
        let mut pose = Pose::hovering(0.0, 0.0, 2.0);
        for _ in 0..100 {
            pose = step_dynamics(&pose, &cmd, DT, &cfg);
        }
        assert!(pose.roll <= cfg.attitude_limit_deg + 1e-12);
    }
}
