//! Deterministic warehouse-grid world: vertical guide lines per shelf row,
//! horizontal node stubs, inter-row connectors and an endpoint marker, all
//! in floor metres. Geometry follows the FOV coupling
//! `D_X = 2·D_Y·tan(σ/2)` between node spacing, shelf clearance and camera
//! field of view.

use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Grid geometry and colors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSpec {
    /// Node spacing along a row, metres. Must equal `2·d_y·tan(σ/2)`.
    pub d_x: f64,
    /// Line-to-shelf clearance, metres.
    pub d_y: f64,
    /// Camera field of view σ, degrees.
    pub sigma_deg: f64,
    pub shelf_rows: u32,
    pub nodes_per_row: u32,
    /// Painted line width, metres.
    pub line_width: f64,
    /// Distance between adjacent rows' guide lines, metres.
    pub row_pitch: f64,
    /// Guide-line color, HSV bytes.
    pub line_color: [u8; 3],
    /// Floor color, HSV bytes.
    pub floor_color: [u8; 3],
    /// Endpoint / charge-station marker color, HSV bytes.
    pub marker_color: [u8; 3],
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec::with_fov(90.0, 0.6, 1, 4)
    }
}

impl WorldSpec {
    /// Builds a spec satisfying the FOV relation by construction.
    pub fn with_fov(sigma_deg: f64, d_y: f64, shelf_rows: u32, nodes_per_row: u32) -> Self {
        let d_x = 2.0 * d_y * (sigma_deg / 2.0).to_radians().tan();
        WorldSpec {
            d_x,
            d_y,
            sigma_deg,
            shelf_rows,
            nodes_per_row,
            line_width: 0.15,
            row_pitch: 2.0 * d_x,
            line_color: [42, 230, 235],
            floor_color: [30, 25, 110],
            marker_color: [160, 210, 200],
        }
    }

    /// Enforces the geometric invariants, in particular the FOV relation to
    /// within 1e-6 relative error.
    pub fn validate(&self) -> Result<()> {
        if self.shelf_rows < 1 || self.nodes_per_row < 1 {
            return Err(Error::invalid("world needs at least one row and one node"));
        }
        if !(self.d_x > 0.0 && self.d_y > 0.0 && self.line_width > 0.0 && self.row_pitch > 0.0) {
            return Err(Error::invalid("world lengths must be positive"));
        }
        if !(self.sigma_deg > 0.0 && self.sigma_deg < 180.0) {
            return Err(Error::invalid("field of view must be in (0, 180) degrees"));
        }
        let expect = 2.0 * self.d_y * (self.sigma_deg / 2.0).to_radians().tan();
        let rel = (self.d_x - expect).abs() / expect.abs();
        if rel > 1e-6 {
            return Err(Error::invalid(format!(
                "node spacing violates d_x = 2·d_y·tan(σ/2): d_x = {}, expected {expect}",
                self.d_x
            )));
        }
        Ok(())
    }
}

/// One grid node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldNode {
    /// Global id: `row · nodes_per_row + index_in_row`.
    pub id: usize,
    pub row: u32,
    pub index_in_row: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    /// A row's vertical guide line.
    Guide,
    /// Horizontal stub through a node.
    Stub,
    /// Inter-row connector.
    Connector,
    /// Endpoint / charge-station marker (not part of the line region).
    Marker,
}

/// A painted floor segment with a width, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldSegment {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub width: f64,
    pub kind: SegmentKind,
}

/// The generated world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub spec: WorldSpec,
    pub nodes: Vec<WorldNode>,
    pub segments: Vec<WorldSegment>,
    /// Vertical extent of the guide lines.
    pub line_y_range: (f64, f64),
    /// First-node offset from the shelf start actually used.
    pub first_node_offset: f64,
    /// Floor extent (x0, y0, x1, y1) with margins.
    pub bounds: (f64, f64, f64, f64),
}

impl World {
    pub fn row_line_x(&self, row: u32) -> f64 {
        row as f64 * self.spec.row_pitch
    }

    pub fn node(&self, id: usize) -> &WorldNode {
        &self.nodes[id]
    }
}

/// Lays the grid out. The seed varies the first-node offset within its legal
/// bound of `d_x/2` from the shelf start.
pub fn generate_world(spec: &WorldSpec, rng_seed: u64) -> Result<World> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let half_span = spec.d_x / 2.0;
    // First node no farther than d_x/2 from the shelf start at y = 0.
    let first = half_span * (0.55 + 0.45 * rng.gen::<f64>());

    let n = spec.nodes_per_row;
    let rows = spec.shelf_rows;
    let y_top = first + (n - 1) as f64 * spec.d_x + half_span;
    let y_bottom = if rows >= 3 { first - half_span } else { 0.0 };

    let mut nodes = Vec::new();
    let mut segments = Vec::new();
    for row in 0..rows {
        let x = row as f64 * spec.row_pitch;
        segments.push(WorldSegment {
            a: [x, y_bottom.min(0.0)],
            b: [x, y_top],
            width: spec.line_width,
            kind: SegmentKind::Guide,
        });
        for j in 0..n {
            let y = first + j as f64 * spec.d_x;
            nodes.push(WorldNode {
                id: (row * n + j) as usize,
                row,
                index_in_row: j,
                x,
                y,
            });
            segments.push(WorldSegment {
                a: [x - spec.d_y, y],
                b: [x + spec.d_y, y],
                width: spec.line_width,
                kind: SegmentKind::Stub,
            });
        }
    }

    if rows >= 2 {
        let x_last = (rows - 1) as f64 * spec.row_pitch;
        segments.push(WorldSegment {
            a: [0.0, y_top],
            b: [x_last, y_top],
            width: spec.line_width,
            kind: SegmentKind::Connector,
        });
        if rows >= 3 {
            segments.push(WorldSegment {
                a: [0.0, y_bottom],
                b: [x_last, y_bottom],
                width: spec.line_width,
                kind: SegmentKind::Connector,
            });
        }
    }

    // Endpoint marker half a node spacing beyond the last node of the
    // boustrophedon path.
    let last_row = rows - 1;
    let last_in_row = if last_row % 2 == 0 { n - 1 } else { 0 };
    let last_node_y = first + last_in_row as f64 * spec.d_x;
    let marker_y = if last_row % 2 == 0 { last_node_y + half_span } else { last_node_y - half_span };
    let marker_x = last_row as f64 * spec.row_pitch;
    let msz = spec.line_width;
    segments.push(WorldSegment {
        a: [marker_x - msz, marker_y],
        b: [marker_x + msz, marker_y],
        width: 2.0 * msz,
        kind: SegmentKind::Marker,
    });

    let x_max = (rows - 1) as f64 * spec.row_pitch;
    let margin = 2.0 * spec.d_y;
    Ok(World {
        spec: spec.clone(),
        nodes,
        segments,
        line_y_range: (y_bottom.min(0.0), y_top),
        first_node_offset: first,
        bounds: (
            -margin,
            y_bottom.min(0.0) - half_span,
            x_max + margin,
            y_top + half_span,
        ),
    })
}
