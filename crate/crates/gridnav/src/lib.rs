//! Grid-line perception and navigation for a downward-camera drone.
//!
//! The crate covers the full loop for warehouse-style grid following:
//!
//! - [`raster`]: 8-bit images, binary masks, HSV conversion, PNM I/O.
//! - [`threshold`]: trainable per-pixel line/floor classifier with a fixed
//!   HSV-range fallback and region growing.
//! - [`centroid`]: slice-and-centroid thick-line detection with RANSAC fits.
//! - [`skeleton`]: Zhang-Suen thinning, Hough transform and line clustering.
//! - [`tracking`]: Kalman smoothing of (ρ, θ), track association, detection
//!   fusion, node intersection and L-turn detection.
//! - [`control`]: PID visual servoing with attitude offset correction and
//!   command clipping.
//! - [`sim`]: deterministic 2D warehouse world, synthetic camera and drone
//!   dynamics, plus the closed-loop runner.
//! - [`strategy`]: mission state machine over grid nodes.
//! - [`eval`]: dataset generation, method comparison against ground truth,
//!   and throughput benchmarks.
//!
//! Runnable walkthroughs for each capability live under `examples/`.

pub mod centroid;
pub mod control;
pub mod skeleton;
pub mod threshold;
pub mod tracking;
mod cc;
pub mod error;
pub mod eval;
pub mod geom;
pub mod pipeline;
pub mod raster;
pub mod sim;
pub mod strategy;

pub use error::{Error, Result};
