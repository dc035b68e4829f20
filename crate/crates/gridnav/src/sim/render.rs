//! Synthetic downward camera: flat-floor pinhole projection with analytic
//! ground-truth line parameters attached to every frame.
//!
//! Attitude enters as the image-space shift observed on the platform: a roll
//! of `t` degrees moves the projected scene by `focal_px·tan(t)` along x,
//! pitch likewise along y. The projection is otherwise a similarity (yaw
//! rotation plus the `f/H` scale), so world line geometry maps exactly onto
//! image lines.

use crate::geom::HessianLine;
use crate::raster::{hsv_to_rgb_px, BitMask, Raster};
use crate::sim::world::{SegmentKind, World};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Pinhole camera: `focal_px = (width/2) / tan(σ/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub width: u32,
    pub height: u32,
    pub focal_px: f64,
}

impl CameraIntrinsics {
    pub fn new(width: u32, height: u32, focal_px: f64) -> Self {
        CameraIntrinsics { width, height, focal_px }
    }

    pub fn from_fov(width: u32, height: u32, sigma_deg: f64) -> Self {
        let focal_px = width as f64 / 2.0 / (sigma_deg / 2.0).to_radians().tan();
        CameraIntrinsics { width, height, focal_px }
    }

    pub fn fov_deg(&self) -> f64 {
        2.0 * (self.width as f64 / 2.0 / self.focal_px).atan().to_degrees()
    }
}

/// Drone state over the floor plane. Angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub altitude_h: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn hovering(x: f64, y: f64, altitude_h: f64) -> Self {
        Pose { x, y, altitude_h, roll: 0.0, pitch: 0.0, yaw: 0.0 }
    }
}

/// Rendering perturbations, applied to the rendered image only — never to
/// the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbConfig {
    pub blur_sigma: f64,
    pub brightness_gain: f64,
    /// Salt-and-pepper density in [0, 1].
    pub speck_density: f64,
    /// Number of opaque occlusion rectangles.
    pub occlusion_rects: u32,
    /// Occluder size cap as a fraction of each image dimension.
    pub occlusion_max_frac: f64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            blur_sigma: 0.0,
            brightness_gain: 1.0,
            speck_density: 0.0,
            occlusion_rects: 0,
            occlusion_max_frac: 0.15,
        }
    }
}

/// A world node visible in the frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GtNode {
    pub x: f64,
    pub y: f64,
    pub world_node: usize,
}

/// A rendered frame with its exact ground truth.
#[derive(Debug, Clone)]
pub struct GroundTruthFrame {
    pub rendered: Raster,
    /// True line-region mask (pre-perturbation geometry).
    pub mask: BitMask,
    /// Exact image-space parameters of every visible grid line.
    pub lines: Vec<HessianLine>,
    pub nodes: Vec<GtNode>,
    pub pose: Pose,
}

struct Projector {
    cx: f64,
    cy: f64,
    scale: f64,
    cos_yaw: f64,
    sin_yaw: f64,
    du: f64,
    dv: f64,
    px: f64,
    py: f64,
}

impl Projector {
    fn new(pose: &Pose, intr: &CameraIntrinsics) -> Self {
        let yaw = pose.yaw.to_radians();
        Projector {
            cx: intr.width as f64 / 2.0,
            cy: intr.height as f64 / 2.0,
            scale: intr.focal_px / pose.altitude_h,
            cos_yaw: yaw.cos(),
            sin_yaw: yaw.sin(),
            du: intr.focal_px * pose.roll.to_radians().tan(),
            dv: intr.focal_px * pose.pitch.to_radians().tan(),
            px: pose.x,
            py: pose.y,
        }
    }

    #[inline]
    fn project(&self, wx: f64, wy: f64) -> (f64, f64) {
        let dx = wx - self.px;
        let dy = wy - self.py;
        // Camera frame: rotate by −yaw.
        let cxr = self.cos_yaw * dx + self.sin_yaw * dy;
        let cyr = -self.sin_yaw * dx + self.cos_yaw * dy;
        (self.cx + self.scale * cxr + self.du, self.cy + self.scale * cyr + self.dv)
    }
}

/// Liang-Barsky clip of a segment to an axis-aligned rectangle; returns the
/// clipped length.
fn clipped_length(
    (x0, y0): (f64, f64),
    (x1, y1): (f64, f64),
    xmin: f64,
    ymin: f64,
    xmax: f64,
    ymax: f64,
) -> f64 {
    let (dx, dy) = (x1 - x0, y1 - y0);
    let mut t0 = 0.0f64;
    let mut t1 = 1.0f64;
    for (p, q) in [
        (-dx, x0 - xmin),
        (dx, xmax - x0),
        (-dy, y0 - ymin),
        (dy, ymax - y0),
    ] {
        if p.abs() < 1e-12 {
            if q < 0.0 {
                return 0.0;
            }
            continue;
        }
        let r = q / p;
        if p < 0.0 {
            t0 = t0.max(r);
        } else {
            t1 = t1.min(r);
        }
    }
    if t0 > t1 {
        0.0
    } else {
        (t1 - t0) * (dx * dx + dy * dy).sqrt()
    }
}

/// Renders the world from `pose`, attaches analytic ground truth, and
/// applies the requested perturbations to the rendered image.
pub fn render_camera(
    world: &World,
    pose: &Pose,
    intr: &CameraIntrinsics,
    perturb: &PerturbConfig,
    rng_seed: u64,
) -> GroundTruthFrame {
    let proj = Projector::new(pose, intr);
    let (w, h) = (intr.width, intr.height);
    let floor_rgb = {
        let [fh, fs, fv] = world.spec.floor_color;
        hsv_to_rgb_px(fh, fs, fv)
    };
    let line_rgb = {
        let [lh, ls, lv] = world.spec.line_color;
        hsv_to_rgb_px(lh, ls, lv)
    };
    let marker_rgb = {
        let [mh, ms, mv] = world.spec.marker_color;
        hsv_to_rgb_px(mh, ms, mv)
    };

    let mut rendered = Raster::new(w, h, 3);
    for px in rendered.data_mut().chunks_exact_mut(3) {
        px.copy_from_slice(&[floor_rgb.0, floor_rgb.1, floor_rgb.2]);
    }
    let mut mask = BitMask::new(w, h);

    for seg in &world.segments {
        let (u0, v0) = proj.project(seg.a[0], seg.a[1]);
        let (u1, v1) = proj.project(seg.b[0], seg.b[1]);
        let half_w = seg.width * proj.scale / 2.0;
        let color = match seg.kind {
            SegmentKind::Marker => marker_rgb,
            _ => line_rgb,
        };

        let x_lo = (u0.min(u1) - half_w - 1.0).floor().max(0.0) as u32;
        let x_hi = (u0.max(u1) + half_w + 1.0).ceil().min(w as f64) as u32;
        let y_lo = (v0.min(v1) - half_w - 1.0).floor().max(0.0) as u32;
        let y_hi = (v0.max(v1) + half_w + 1.0).ceil().min(h as f64) as u32;

        let (ex, ey) = (u1 - u0, v1 - v0);
        let len2 = ex * ex + ey * ey;
        for y in y_lo..y_hi {
            for x in x_lo..x_hi {
                // Pixel (x, y) samples the point at its centre.
                let (sx, sy) = (x as f64 + 0.5, y as f64 + 0.5);
                let t = if len2 > 0.0 {
                    (((sx - u0) * ex + (sy - v0) * ey) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (qx, qy) = (u0 + t * ex, v0 + t * ey);
                let d2 = (sx - qx) * (sx - qx) + (sy - qy) * (sy - qy);
                if d2 <= half_w * half_w {
                    rendered.set_pixel(x, y, &[color.0, color.1, color.2]);
                    if seg.kind != SegmentKind::Marker {
                        mask.set(x, y, true);
                    }
                }
            }
        }
    }

    // Ground-truth lines: each non-marker segment whose thick band shows a
    // meaningful extent in-frame contributes its infinite line.
    let min_visible = 0.10 * w.min(h) as f64;
    let mut lines: Vec<HessianLine> = Vec::new();
    for seg in &world.segments {
        if seg.kind == SegmentKind::Marker {
            continue;
        }
        let p0 = proj.project(seg.a[0], seg.a[1]);
        let p1 = proj.project(seg.b[0], seg.b[1]);
        let half_w = seg.width * proj.scale / 2.0;
        let visible = clipped_length(
            p0,
            p1,
            -half_w,
            -half_w,
            w as f64 + half_w,
            h as f64 + half_w,
        );
        if visible < min_visible {
            continue;
        }
        let (dx, dy) = (p1.0 - p0.0, p1.1 - p0.1);
        let theta = dy.atan2(dx).to_degrees() + 90.0;
        let t = theta.to_radians();
        let rho = p0.0 * t.cos() + p0.1 * t.sin();
        lines.push(HessianLine::new(rho, theta));
    }

    let nodes: Vec<GtNode> = world
        .nodes
        .iter()
        .filter_map(|n| {
            let (u, v) = proj.project(n.x, n.y);
            (u >= 0.0 && u < w as f64 && v >= 0.0 && v < h as f64)
                .then_some(GtNode { x: u, y: v, world_node: n.id })
        })
        .collect();

    // Perturbations: physical occluders first, then optics (blur), then
    // illumination (gain), then sensor specks.
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    if perturb.occlusion_rects > 0 {
        for _ in 0..perturb.occlusion_rects {
            let ow = (rng.gen::<f64>() * perturb.occlusion_max_frac * w as f64) as u32;
            let oh = (rng.gen::<f64>() * perturb.occlusion_max_frac * h as f64) as u32;
            let ox = rng.gen_range(0..w);
            let oy = rng.gen_range(0..h);
            let gray = rng.gen_range(40u8..180);
            for y in oy..(oy + oh.max(1)).min(h) {
                for x in ox..(ox + ow.max(1)).min(w) {
                    rendered.set_pixel(x, y, &[gray, gray, gray]);
                }
            }
        }
    }
    if perturb.blur_sigma > 0.0 || perturb.brightness_gain != 1.0 {
        rendered =
            crate::raster::perturb(&rendered, perturb.blur_sigma, perturb.brightness_gain, rng_seed);
    }
    if perturb.speck_density > 0.0 {
        let n = (perturb.speck_density * w as f64 * h as f64) as u64;
        for _ in 0..n {
            let x = rng.gen_range(0..w);
            let y = rng.gen_range(0..h);
            let v = if rng.gen::<bool>() { 255 } else { 0 };
            rendered.set_pixel(x, y, &[v, v, v]);
        }
    }

    GroundTruthFrame { rendered, mask, lines, nodes, pose: *pose }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::LineClass;
    use crate::sim::world::{generate_world, WorldSpec};

    fn test_world(rows: u32, nodes: u32) -> World {
        generate_world(&WorldSpec::with_fov(90.0, 0.6, rows, nodes), 1).unwrap()
    }

    #[test]
    fn centered_vertical_projects_to_half_width() {
        let w = test_world(1, 3);
        let intr = CameraIntrinsics::from_fov(320, 240, 90.0);
        let pose = Pose::hovering(0.0, w.nodes[0].y + w.spec.d_x / 2.0, 2.0);
        let gt = render_camera(&w, &pose, &intr, &PerturbConfig::default(), 0);
        let vert: Vec<&HessianLine> =
            gt.lines.iter().filter(|l| l.classify() == LineClass::Vertical).collect();
        assert_eq!(vert.len(), 1);
        let (rho, theta) = vert[0].vertical_form();
        assert!((rho - 160.0).abs() < 1e-9, "rho {rho}");
        assert!(theta.abs() < 1e-9);
    }

    #[test]
    fn roll_shifts_vertical_by_focal_tan() {
        // Focal 700 px with a consistent world FOV.
        let width = 320u32;
        let focal = 700.0;
        let sigma = 2.0 * (width as f64 / 2.0 / focal).atan().to_degrees();
        let world = generate_world(&WorldSpec::with_fov(sigma, 0.6, 1, 3), 1).unwrap();
        let intr = CameraIntrinsics::new(width, 240, focal);
        assert!((intr.focal_px - CameraIntrinsics::from_fov(width, 240, sigma).focal_px).abs() < 1e-9);

        let y = world.nodes[0].y + world.spec.d_x / 2.0;
        let flat = render_camera(
            &world,
            &Pose::hovering(0.0, y, 2.0),
            &intr,
            &PerturbConfig::default(),
            0,
        );
        let tilted = render_camera(
            &world,
            &Pose { roll: 5.0, ..Pose::hovering(0.0, y, 2.0) },
            &intr,
            &PerturbConfig::default(),
            0,
        );
        let rho0 = flat.lines[0].vertical_form().0;
        let rho5 = tilted.lines[0].vertical_form().0;
        let shift = rho5 - rho0;
        assert!((shift - 61.2).abs() < 0.1, "shift {shift}");
    }

    #[test]
    fn between_nodes_sees_one_vertical_only() {
        // Far apart nodes: midway between two stubs nothing horizontal shows.
        let world = generate_world(&WorldSpec::with_fov(90.0, 2.0, 1, 3), 1).unwrap();
        let intr = CameraIntrinsics::from_fov(320, 240, 90.0);
        let y = world.nodes[0].y + world.spec.d_x / 2.0;
        let gt = render_camera(&world, &Pose::hovering(0.0, y, 1.5), &intr, &PerturbConfig::default(), 0);
        let verts = gt.lines.iter().filter(|l| l.classify() == LineClass::Vertical).count();
        let horiz = gt.lines.iter().filter(|l| l.classify() == LineClass::Horizontal).count();
        assert_eq!((verts, horiz), (1, 0), "lines: {:?}", gt.lines);
        assert!(gt.nodes.is_empty());
    }

    #[test]
    fn node_view_contains_cross_and_node() {
        let world = test_world(1, 3);
        let intr = CameraIntrinsics::from_fov(320, 240, 90.0);
        let n = &world.nodes[1];
        let gt = render_camera(
            &world,
            &Pose::hovering(n.x, n.y, 2.0),
            &intr,
            &PerturbConfig::default(),
            0,
        );
        assert!(gt.nodes.iter().any(|g| g.world_node == n.id));
        let classes: Vec<LineClass> = gt.lines.iter().map(|l| l.classify()).collect();
        assert!(classes.contains(&LineClass::Vertical));
        assert!(classes.contains(&LineClass::Horizontal));
        // The node estimate sits at frame centre.
        let g = gt.nodes.iter().find(|g| g.world_node == n.id).unwrap();
        assert!((g.x - 160.0).abs() < 1e-9 && (g.y - 120.0).abs() < 1e-9);
    }

    #[test]
    fn yaw_rotates_line_classes() {
        let world = test_world(1, 3);
        let intr = CameraIntrinsics::from_fov(320, 240, 90.0);
        let n = &world.nodes[1];
        let gt = render_camera(
            &world,
            &Pose { yaw: 90.0, ..Pose::hovering(n.x, n.y, 2.0) },
            &intr,
            &PerturbConfig::default(),
            0,
        );
        // With the camera yawed 90° the world vertical appears horizontal.
        let verts = gt.lines.iter().filter(|l| l.classify() == LineClass::Vertical).count();
        let horiz = gt.lines.iter().filter(|l| l.classify() == LineClass::Horizontal).count();
        assert!(verts >= 1 && horiz >= 1, "classes swap under yaw");
    }

    #[test]
    fn mask_matches_rendered_line_pixels() {
        let world = test_world(1, 3);
        let intr = CameraIntrinsics::from_fov(320, 240, 90.0);
        let n = &world.nodes[0];
        let gt = render_camera(
            &world,
            &Pose::hovering(n.x, n.y, 2.0),
            &intr,
            &PerturbConfig::default(),
            0,
        );
        let line_rgb = {
            let [lh, ls, lv] = world.spec.line_color;
            hsv_to_rgb_px(lh, ls, lv)
        };
        for y in 0..240 {
            for x in 0..320 {
                let px = gt.rendered.pixel(x, y);
                let is_line = px == [line_rgb.0, line_rgb.1, line_rgb.2];
                assert_eq!(is_line, gt.mask.get(x, y), "at ({x},{y})");
            }
        }
    }

    #[test]
    fn rendering_is_deterministic_with_perturbations() {
        let world = test_world(1, 3);
        let intr = CameraIntrinsics::from_fov(160, 120, 90.0);
        let perturb = PerturbConfig {
            blur_sigma: 1.0,
            brightness_gain: 1.2,
            speck_density: 0.01,
            occlusion_rects: 2,
            occlusion_max_frac: 0.2,
        };
        let pose = Pose::hovering(0.0, world.nodes[1].y, 2.0);
        let a = render_camera(&world, &pose, &intr, &perturb, 99);
        let b = render_camera(&world, &pose, &intr, &perturb, 99);
        assert_eq!(a.rendered, b.rendered);
        assert_eq!(a.mask, b.mask);
        let c = render_camera(&world, &pose, &intr, &perturb, 100);
        assert_ne!(a.rendered, c.rendered);
    }
}
