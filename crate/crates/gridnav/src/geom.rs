//! Line and point geometry shared by the detectors, the tracker and the
//! simulator.
//!
//! Lines are kept in Hessian normal form `x·cos(θ) + y·sin(θ) = ρ` with θ in
//! degrees in `[0, 180)` and ρ in pixels. The image origin is the top-left
//! corner, x grows rightward and y downward, so a vertical image line sits at
//! θ = 0 and a horizontal one at θ = 90. ρ is signed: a near-vertical line
//! tilted past θ = 90 carries a negative ρ in this parameterization, which is
//! why all comparisons below go through the wrap-aware helpers instead of raw
//! subtraction.

use serde::{Deserialize, Serialize};

/// Sub-pixel image point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// Grid-line class: vertical lines run parallel to the shelf (θ near 0 or
/// 180), horizontal lines perpendicular to it (θ near 90).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineClass {
    Vertical,
    Horizontal,
}

/// A line in Hessian normal form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HessianLine {
    /// Perpendicular distance from the image origin, pixels. Signed.
    pub rho: f64,
    /// Normal angle in degrees, always in `[0, 180)`.
    pub theta_deg: f64,
}

impl HessianLine {
    /// Builds a line, reducing θ into `[0, 180)` and flipping the sign of ρ
    /// for every half-turn removed.
    pub fn new(rho: f64, theta_deg: f64) -> Self {
        let mut theta = theta_deg.rem_euclid(360.0);
        let mut rho = rho;
        if theta >= 180.0 {
            theta -= 180.0;
            rho = -rho;
        }
        // rem_euclid can return exactly 360.0 for tiny negative inputs.
        if theta >= 180.0 {
            theta -= 180.0;
            rho = -rho;
        }
        HessianLine { rho, theta_deg: theta }
    }

    /// Line class per the ±30° bands around the vertical reference:
    /// vertical when `0 ≤ θ < 30` or `150 < θ < 180`, horizontal otherwise.
    /// θ = 150 falls on the horizontal side of the strict inequality.
    pub fn classify(&self) -> LineClass {
        let t = self.theta_deg;
        if (0.0..30.0).contains(&t) || (t > 150.0 && t < 180.0) {
            LineClass::Vertical
        } else {
            LineClass::Horizontal
        }
    }

    /// Signed perpendicular distance from `p` to the line, in pixels.
    /// Positive on the side the normal `(cos θ, sin θ)` points to.
    pub fn signed_distance(&self, x: f64, y: f64) -> f64 {
        let t = self.theta_deg.to_radians();
        x * t.cos() + y * t.sin() - self.rho
    }

    /// Re-expresses `self` in the angular frame of `reference`: returns
    /// `(rho, delta)` where `delta = θ_self − θ_ref` wrapped to `(−90, 90]`
    /// and ρ's sign is flipped for each half-turn the wrap removed.
    pub fn align_to(&self, reference: &HessianLine) -> (f64, f64) {
        let mut delta = self.theta_deg - reference.theta_deg;
        let mut rho = self.rho;
        if delta > 90.0 {
            delta -= 180.0;
            rho = -rho;
        } else if delta <= -90.0 {
            delta += 180.0;
            rho = -rho;
        }
        (rho, delta)
    }

    /// Wrap-aware distance between two lines: `(|Δρ|, |Δθ|)` with θ treated
    /// as 180°-periodic and ρ compared after sign alignment.
    pub fn distance_to(&self, other: &HessianLine) -> (f64, f64) {
        let (rho, delta) = other.align_to(self);
        ((self.rho - rho).abs(), delta.abs())
    }

    /// For near-vertical lines: `(rho, theta)` with θ wrapped to `(−90, 90]`
    /// around the 0°/180° reference, so ρ is the (positive, in-image)
    /// x-axis intercept and θ the signed tilt.
    pub fn vertical_form(&self) -> (f64, f64) {
        if self.theta_deg > 90.0 {
            (-self.rho, self.theta_deg - 180.0)
        } else {
            (self.rho, self.theta_deg)
        }
    }

    /// Intersection point of two lines, or `None` when they are parallel
    /// within `|sin Δθ| < 1e-6`.
    pub fn intersection(&self, other: &HessianLine) -> Option<Point> {
        let t1 = self.theta_deg.to_radians();
        let t2 = other.theta_deg.to_radians();
        let det = (t2 - t1).sin();
        if det.abs() < 1e-6 {
            return None;
        }
        let (c1, s1) = (t1.cos(), t1.sin());
        let (c2, s2) = (t2.cos(), t2.sin());
        let x = (self.rho * s2 - other.rho * s1) / det;
        let y = (other.rho * c1 - self.rho * c2) / det;
        Some(Point::new(x, y))
    }
}

/// A detected line together with its support (Hough votes or RANSAC
/// inlier count).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredLine {
    #[serde(flatten)]
    pub line: HessianLine,
    pub support: u32,
}

/// Weighted circular mean of angles with period 180°, computed through the
/// double-angle embedding. Returns a value in `[0, 180)`.
pub fn circular_mean_180(samples: &[(f64, f64)]) -> f64 {
    let mut sx = 0.0;
    let mut sy = 0.0;
    for &(theta_deg, w) in samples {
        let a = (2.0 * theta_deg).to_radians();
        sx += w * a.cos();
        sy += w * a.sin();
    }
    let mean = 0.5 * sy.atan2(sx).to_degrees();
    mean.rem_euclid(180.0)
}

/// Wraps an angular difference in degrees to `(−90, 90]`.
pub fn wrap_half_turn(delta_deg: f64) -> f64 {
    let mut d = delta_deg.rem_euclid(180.0);
    if d > 90.0 {
        d -= 180.0;
    }
    d
}
