//! Deterministic 2D warehouse simulator: world generation, synthetic
//! downward camera with exact ground truth, first-order drone dynamics, and
//! the closed-loop mission runner.

mod dynamics;
mod render;
mod runner;
mod world;

pub use dynamics::{step_dynamics, DynamicsConfig};
pub use render::{
    render_camera, CameraIntrinsics, GroundTruthFrame, GtNode, PerturbConfig, Pose,
};
pub use runner::{
    run_closed_loop, MissionStatus, RunConfig, Trace, TraceStep, TraceSummary,
};
pub use world::{generate_world, SegmentKind, World, WorldNode, WorldSegment, WorldSpec};
