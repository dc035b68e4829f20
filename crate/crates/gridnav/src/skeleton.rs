//! Skeleton line detection: thin the thresholded mask to single-pixel width
//! with the Zhang-Suen rule table, run a (ρ, θ) Hough transform over the
//! skeleton, and cluster nearby peaks so each physical line reports once.

use crate::geom::{circular_mean_180, HessianLine, ScoredLine};
use crate::raster::BitMask;

pub use crate::geom::LineClass;

/// Zhang-Suen thinning. Iterates the two sub-passes (neighbour count in
/// 2..=6, exactly one 0→1 transition around the pixel, and the directional
/// neighbour products of the respective sub-pass) until a full iteration
/// deletes nothing. The output is a subset of the input, one pixel wide.
///
/// Deletions within a sub-pass are decided on the frozen grid and applied
/// together. The scan itself runs over a candidate list seeded with all
/// foreground pixels: pixels whose neighbour count leaves the deletable
/// range are dropped and only re-examined when an adjacent pixel is deleted
/// (neighbour counts never grow), which keeps later passes proportional to
/// the shrinking boundary instead of the whole image.
pub fn zhang_suen_thin(mask: &BitMask) -> BitMask {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let stride = w + 2;
    // Padded grid: a one-pixel zero border removes bounds checks.
    let mut grid = vec![0u8; stride * (h + 2)];
    let mut cand: Vec<u32> = Vec::new();
    for (x, y) in mask.set_pixels() {
        let idx = (y as usize + 1) * stride + x as usize + 1;
        grid[idx] = 1;
        cand.push(idx as u32);
    }
    let mut in_cand = vec![false; grid.len()];
    for &i in &cand {
        in_cand[i as usize] = true;
    }

    let nb = |stride: usize| -> [isize; 8] {
        let s = stride as isize;
        // p2..p9: N, NE, E, SE, S, SW, W, NW.
        [-s, -s + 1, 1, s + 1, s, s - 1, -1, -s - 1]
    };
    let offs = nb(stride);

    let mut to_delete: Vec<u32> = Vec::new();
    loop {
        let mut deleted_this_iter = 0usize;
        for sub in 0..2 {
            to_delete.clear();
            let mut kept = 0usize;
            for ci in 0..cand.len() {
                let idx = cand[ci] as usize;
                if grid[idx] == 0 {
                    in_cand[idx] = false;
                    continue;
                }
                let mut n = [0u8; 8];
                for (k, &o) in offs.iter().enumerate() {
                    n[k] = grid[(idx as isize + o) as usize];
                }
                let b: u8 = n.iter().sum();
                if !(2..=6).contains(&b) {
                    // Not deletable now; neighbour counts only decrease, so
                    // park it until a neighbouring deletion re-adds it.
                    in_cand[idx] = false;
                    continue;
                }
                let mut a = 0u8;
                for k in 0..8 {
                    if n[k] == 0 && n[(k + 1) % 8] == 1 {
                        a += 1;
                    }
                }
                let ok = if sub == 0 {
                    a == 1 && n[0] & n[2] & n[4] == 0 && n[2] & n[4] & n[6] == 0
                } else {
                    a == 1 && n[0] & n[2] & n[6] == 0 && n[0] & n[4] & n[6] == 0
                };
                if ok {
                    to_delete.push(idx as u32);
                }
                cand[kept] = idx as u32;
                kept += 1;
            }
            cand.truncate(kept);

            for &idx in &to_delete {
                grid[idx as usize] = 0;
                in_cand[idx as usize] = false;
            }
            // Deletions change neighbour counts: wake adjacent pixels.
            for &idx in &to_delete {
                for &o in &offs {
                    let ni = (idx as isize + o) as usize;
                    if grid[ni] == 1 && !in_cand[ni] {
                        in_cand[ni] = true;
                        cand.push(ni as u32);
                    }
                }
            }
            // Deleted pixels may still sit in `cand`; the grid check at the
            // top of the scan skips them.
            deleted_this_iter += to_delete.len();
        }
        if deleted_this_iter == 0 {
            break;
        }
    }

    let mut out = BitMask::new(mask.width(), mask.height());
    for y in 0..h {
        for x in 0..w {
            if grid[(y + 1) * stride + x + 1] == 1 {
                out.set(x as u32, y as u32, true);
            }
        }
    }
    out
}

/// Hough accumulator discretization and peak policy.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct HoughParams {
    /// θ bin width in degrees.
    pub theta_step_deg: f64,
    /// ρ bin width in pixels.
    pub rho_step: f64,
    /// Minimum votes for a peak.
    pub peak_threshold: u32,
    /// Non-max suppression half-window, ρ cells.
    pub nms_rho_cells: u32,
    /// Non-max suppression half-window, θ cells.
    pub nms_theta_cells: u32,
}

impl Default for HoughParams {
    fn default() -> Self {
        HoughParams {
            theta_step_deg: 1.0,
            rho_step: 1.0,
            peak_threshold: 30,
            nms_rho_cells: 10,
            nms_theta_cells: 5,
        }
    }
}

impl HoughParams {
    /// Default parameters with the vote threshold scaled linearly by image
    /// diagonal from its 1920×1080 reference value of 30, floored at 20:
    /// below that, chance alignments through junction pixels start passing
    /// as lines on small frames.
    pub fn for_dims(width: u32, height: u32) -> Self {
        let diag = ((width as f64).powi(2) + (height as f64).powi(2)).sqrt();
        let reference = (1920.0f64.powi(2) + 1080.0f64.powi(2)).sqrt();
        let thr = (30.0 * diag / reference).round().max(20.0) as u32;
        HoughParams { peak_threshold: thr, ..Default::default() }
    }
}

/// Standard (ρ, θ) Hough transform over the set pixels of `mask`.
///
/// θ spans `[0°, 180°)` and ρ `[−ρmax, ρmax]` with `ρmax = √(w² + h²)`.
/// Local accumulator maxima at or above `peak_threshold` survive non-max
/// suppression over the configured window (wrap-aware at the θ seam, where
/// the mirrored cell sits at negated ρ) and come back normalized and sorted
/// by votes, descending.
pub fn hough_lines(mask: &BitMask, params: &HoughParams) -> Vec<ScoredLine> {
    let (w, h) = (mask.width() as f64, mask.height() as f64);
    let n_theta = (180.0 / params.theta_step_deg).ceil() as usize;
    let rho_max = (w * w + h * h).sqrt();
    let offset = (rho_max / params.rho_step).floor() as i64;
    let n_rho = (2 * offset + 1) as usize;

    let lut: Vec<(f64, f64)> = (0..n_theta)
        .map(|t| {
            let a = (t as f64 * params.theta_step_deg).to_radians();
            (a.cos(), a.sin())
        })
        .collect();

    let mut acc = vec![0u32; n_theta * n_rho];
    for (x, y) in mask.set_pixels() {
        let (xf, yf) = (x as f64, y as f64);
        for (t, &(c, s)) in lut.iter().enumerate() {
            let rho = xf * c + yf * s;
            let r = (rho / params.rho_step).round() as i64 + offset;
            if (0..n_rho as i64).contains(&r) {
                acc[t * n_rho + r as usize] += 1;
            }
        }
    }

    // Candidate peaks, then wrap-aware non-max suppression.
    let mut peaks: Vec<(u32, usize, usize)> = Vec::new();
    for t in 0..n_theta {
        for r in 0..n_rho {
            let v = acc[t * n_rho + r];
            if v >= params.peak_threshold {
                peaks.push((v, t, r));
            }
        }
    }

    let survives = |v: u32, t: usize, r: usize| -> bool {
        let (dt_max, dr_max) = (params.nms_theta_cells as i64, params.nms_rho_cells as i64);
        for dt in -dt_max..=dt_max {
            for dr in -dr_max..=dr_max {
                if dt == 0 && dr == 0 {
                    continue;
                }
                let mut tt = t as i64 + dt;
                let mut rr = r as i64 + dr;
                if tt < 0 || tt >= n_theta as i64 {
                    // θ wraps with ρ mirrored: (ρ, θ±180) ≡ (−ρ, θ).
                    tt = tt.rem_euclid(n_theta as i64);
                    rr = (n_rho as i64 - 1) - rr;
                }
                if rr < 0 || rr >= n_rho as i64 {
                    continue;
                }
                let other = acc[tt as usize * n_rho + rr as usize];
                if other > v || (other == v && (tt as usize, rr as usize) < (t, r)) {
                    return false;
                }
            }
        }
        true
    };

    let mut lines: Vec<ScoredLine> = peaks
        .into_iter()
        .filter(|&(v, t, r)| survives(v, t, r))
        .map(|(v, t, r)| {
            let theta = t as f64 * params.theta_step_deg;
            let rho = (r as i64 - offset) as f64 * params.rho_step;
            ScoredLine { line: HessianLine::new(rho, theta), support: v }
        })
        .collect();
    lines.sort_by(|a, b| {
        b.support
            .cmp(&a.support)
            .then(a.line.theta_deg.partial_cmp(&b.line.theta_deg).unwrap())
            .then(a.line.rho.partial_cmp(&b.line.rho).unwrap())
    });
    lines
}

/// Greedy agglomeration of near-identical lines: members join a cluster when
/// their circular θ distance to the seed is within `theta_res` and the
/// aligned |Δρ| within `rho_res`. Each cluster collapses to its vote-weighted
/// mean (θ averaged circularly through the double-angle embedding).
pub fn cluster_lines(lines: &[ScoredLine], theta_res_deg: f64, rho_res: f64) -> Vec<ScoredLine> {
    assert!(theta_res_deg > 0.0 && rho_res > 0.0, "cluster resolutions must be positive");
    let mut assigned = vec![false; lines.len()];
    let mut out = Vec::new();
    for i in 0..lines.len() {
        if assigned[i] {
            continue;
        }
        assigned[i] = true;
        let seed = lines[i];
        let mut members = vec![i];
        for (j, line) in lines.iter().enumerate().skip(i + 1) {
            if assigned[j] {
                continue;
            }
            let (drho, dtheta) = seed.line.distance_to(&line.line);
            if dtheta <= theta_res_deg && drho <= rho_res {
                assigned[j] = true;
                members.push(j);
            }
        }

        let mut support = 0u32;
        let mut rho_sum = 0.0;
        let mut theta_samples = Vec::with_capacity(members.len());
        for &m in &members {
            let w = lines[m].support.max(1) as f64;
            let (rho_aligned, _) = lines[m].line.align_to(&seed.line);
            rho_sum += w * rho_aligned;
            theta_samples.push((lines[m].line.theta_deg, w));
            support += lines[m].support;
        }
        let w_total: f64 = theta_samples.iter().map(|&(_, w)| w).sum();
        let theta_mean = circular_mean_180(&theta_samples);
        let rho_mean = rho_sum / w_total;
        // The mean ρ lives in the seed's frame; flip it if the mean θ
        // crossed the 180° seam relative to the seed.
        let (sign_probe, _) = HessianLine::new(1.0, theta_mean).align_to(&seed.line);
        let rho_final = if sign_probe < 0.0 { -rho_mean } else { rho_mean };
        out.push(ScoredLine { line: HessianLine::new(rho_final, theta_mean), support });
    }
    out.sort_by(|a, b| b.support.cmp(&a.support));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::LineClass;

    /// Straightforward full-scan Zhang-Suen used as the independent oracle.
    fn zs_reference(mask: &BitMask) -> BitMask {
        let (w, h) = (mask.width() as i64, mask.height() as i64);
        let mut grid: Vec<Vec<bool>> = (0..h)
            .map(|y| (0..w).map(|x| mask.get(x as u32, y as u32)).collect())
            .collect();
        let at = |g: &Vec<Vec<bool>>, x: i64, y: i64| -> u8 {
            if x < 0 || y < 0 || x >= w || y >= h {
                0
            } else {
                g[y as usize][x as usize] as u8
            }
        };
        loop {
            let mut changed = false;
            for sub in 0..2 {
                let snapshot = grid.clone();
                let mut dels = Vec::new();
                for y in 0..h {
                    for x in 0..w {
                        if !snapshot[y as usize][x as usize] {
                            continue;
                        }
                        let p = [
                            at(&snapshot, x, y - 1),
                            at(&snapshot, x + 1, y - 1),
                            at(&snapshot, x + 1, y),
                            at(&snapshot, x + 1, y + 1),
                            at(&snapshot, x, y + 1),
                            at(&snapshot, x - 1, y + 1),
                            at(&snapshot, x - 1, y),
                            at(&snapshot, x - 1, y - 1),
                        ];
                        let b: u8 = p.iter().sum();
                        if !(2..=6).contains(&b) {
                            continue;
                        }
                        let mut a = 0;
                        for k in 0..8 {
                            if p[k] == 0 && p[(k + 1) % 8] == 1 {
                                a += 1;
                            }
                        }
                        if a != 1 {
                            continue;
                        }
                        let ok = if sub == 0 {
                            p[0] & p[2] & p[4] == 0 && p[2] & p[4] & p[6] == 0
                        } else {
                            p[0] & p[2] & p[6] == 0 && p[0] & p[4] & p[6] == 0
                        };
                        if ok {
                            dels.push((x, y));
                        }
                    }
                }
                for &(x, y) in &dels {
                    grid[y as usize][x as usize] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        BitMask::from_fn(mask.width(), mask.height(), |x, y| grid[y as usize][x as usize])
    }

    fn random_mask(w: u32, h: u32, state: &mut u64, density_shift: u32) -> BitMask {
        BitMask::from_fn(w, h, |_, _| {
            *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (*state >> (64 - density_shift)) == 0
        })
    }

    #[test]
    fn thin_matches_reference_on_random_masks() {
        let mut state = 0x1234_5678u64;
        for round in 0..25 {
            let m = random_mask(48, 36, &mut state, 1 + round % 3);
            assert_eq!(zhang_suen_thin(&m), zs_reference(&m), "round {round}");
        }
    }

    #[test]
    fn thin_matches_reference_on_shapes() {
        let bar = BitMask::from_fn(100, 30, |x, y| (10..=14).contains(&y) && x < 100);
        assert_eq!(zhang_suen_thin(&bar), zs_reference(&bar));
        let disc = BitMask::from_fn(40, 40, |x, y| {
            let (dx, dy) = (x as f64 - 20.0, y as f64 - 20.0);
            dx * dx + dy * dy <= 144.0
        });
        assert_eq!(zhang_suen_thin(&disc), zs_reference(&disc));
        let cross = BitMask::from_fn(60, 60, |x, y| (27..=33).contains(&x) || (27..=33).contains(&y));
        assert_eq!(zhang_suen_thin(&cross), zs_reference(&cross));
    }

    #[test]
    fn thin_keeps_one_pixel_diagonal() {
        let m = BitMask::from_fn(20, 20, |x, y| x == y);
        assert_eq!(zhang_suen_thin(&m), m);
    }

    #[test]
    fn thin_reduces_bar_to_centerline() {
        // Bar ends erode by up to ~half the thickness; the centerline claim
        // is about interior columns.
        let m = BitMask::from_fn(100, 25, |x, y| (10..=14).contains(&y) && x < 100);
        let thin = zhang_suen_thin(&m);
        for x in 3..=95u32 {
            let col: Vec<u32> = (0..25).filter(|&y| thin.get(x, y)).collect();
            assert_eq!(col, vec![12], "column {x}");
        }
    }

    #[test]
    fn thin_empty_is_empty() {
        let m = BitMask::new(16, 16);
        assert!(zhang_suen_thin(&m).is_empty());
    }

    #[test]
    fn thin_is_idempotent_and_subset() {
        let mut state = 0xabcdu64;
        for _ in 0..10 {
            let m = random_mask(40, 32, &mut state, 2);
            let once = zhang_suen_thin(&m);
            let twice = zhang_suen_thin(&once);
            assert_eq!(once, twice);
            for (x, y) in once.set_pixels() {
                assert!(m.get(x, y), "thinning created pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn hough_finds_axis_aligned_lines() {
        let params = HoughParams { peak_threshold: 20, ..Default::default() };

        let vert = BitMask::from_fn(200, 200, |x, _| x == 100);
        let lines = hough_lines(&vert, &params);
        let top = lines[0];
        assert!((top.line.rho - 100.0).abs() <= 1.0);
        assert!(top.line.theta_deg.abs() <= 1.0 || (180.0 - top.line.theta_deg).abs() <= 1.0);

        let horiz = BitMask::from_fn(200, 200, |_, y| y == 50);
        let top = hough_lines(&horiz, &params)[0];
        assert!((top.line.rho - 50.0).abs() <= 1.0);
        assert!((top.line.theta_deg - 90.0).abs() <= 1.0);
    }

    #[test]
    fn hough_finds_diagonal() {
        let params = HoughParams { peak_threshold: 20, ..Default::default() };
        let diag = BitMask::from_fn(200, 200, |x, y| x == y);
        let top = hough_lines(&diag, &params)[0];
        assert!(top.line.rho.abs() <= 1.0, "rho {}", top.line.rho);
        assert!((top.line.theta_deg - 135.0).abs() <= 1.0, "theta {}", top.line.theta_deg);

        // Independent oracle: exhaustive accumulator at 0.5° resolution.
        let oracle = hough_lines(
            &diag,
            &HoughParams {
                theta_step_deg: 0.5,
                rho_step: 0.5,
                peak_threshold: 20,
                nms_rho_cells: 20,
                nms_theta_cells: 10,
            },
        );
        let (dr, dt) = top.line.distance_to(&oracle[0].line);
        assert!(dr <= 1.0 && dt <= 1.0);
    }

    #[test]
    fn hough_empty_mask_yields_nothing() {
        let m = BitMask::new(64, 64);
        assert!(hough_lines(&m, &HoughParams::default()).is_empty());
    }

    fn draw_line(mask: &mut BitMask, rho: f64, theta_deg: f64) -> u32 {
        // March along the line direction and set covered pixels.
        let t = theta_deg.to_radians();
        let (c, s) = (t.cos(), t.sin());
        let (dx, dy) = (-s, c);
        let (px, py) = (rho * c, rho * s);
        let mut n = 0;
        let diag = ((mask.width() * mask.width() + mask.height() * mask.height()) as f64).sqrt();
        let steps = (2.0 * diag) as i64;
        for k in -steps..=steps {
            let x = px + dx * k as f64 * 0.5;
            let y = py + dy * k as f64 * 0.5;
            if x >= 0.0 && y >= 0.0 && (x as u32) < mask.width() && (y as u32) < mask.height() {
                if !mask.get(x as u32, y as u32) {
                    n += 1;
                }
                mask.set(x as u32, y as u32, true);
            }
        }
        n
    }

    #[test]
    fn hough_recovers_random_lines() {
        let mut state = 0x51u64;
        let params = HoughParams { peak_threshold: 25, ..Default::default() };
        let mut tested = 0;
        while tested < 30 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let theta = (state >> 40) as f64 % 180.0;
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let rho = ((state >> 40) as f64 % 240.0) - 60.0;
            let mut m = BitMask::new(240, 180);
            if draw_line(&mut m, rho, theta) < 50 {
                continue;
            }
            tested += 1;
            let truth = HessianLine::new(rho, theta);
            let top = hough_lines(&m, &params)[0];
            let (dr, dt) = top.line.distance_to(&truth);
            assert!(
                dr <= 1.0 + params.rho_step && dt <= 1.0 + params.theta_step_deg,
                "target ({rho:.1},{theta:.1}) got ({:.1},{:.1})",
                top.line.rho,
                top.line.theta_deg
            );
        }
    }

    #[test]
    fn hough_is_rotation_consistent() {
        // Rotating the mask 90° clockwise maps (x,y) -> (h-1-y, x) and a line
        // (ρ,θ) -> (ρ - (h-1)·sinθ, θ+90).
        let mut m = BitMask::new(200, 160);
        draw_line(&mut m, 70.0, 25.0);
        let h = m.height();
        let rot = BitMask::from_fn(h, m.width(), |x, y| m.get(y, h - 1 - x));
        let params = HoughParams { peak_threshold: 25, ..Default::default() };
        let orig = hough_lines(&m, &params)[0].line;
        let rotated = hough_lines(&rot, &params)[0].line;
        let t = orig.theta_deg.to_radians();
        let expect =
            HessianLine::new(orig.rho - (h as f64 - 1.0) * t.sin(), orig.theta_deg + 90.0);
        let (dr, dt) = rotated.distance_to(&expect);
        assert!(dr <= 1.5 && dt <= 1.5, "dr {dr} dt {dt}");
    }

    #[test]
    fn cluster_merges_close_lines() {
        let lines = [
            ScoredLine { line: HessianLine::new(100.0, 0.0), support: 50 },
            ScoredLine { line: HessianLine::new(101.0, 2.0), support: 50 },
        ];
        let merged = cluster_lines(&lines, 5.0, 20.0);
        assert_eq!(merged.len(), 1);
        assert!((merged[0].line.rho - 100.5).abs() < 1e-9);
        assert!((merged[0].line.theta_deg - 1.0).abs() < 1e-9);
        assert_eq!(merged[0].support, 100);
    }

    #[test]
    fn cluster_keeps_distinct_lines() {
        let lines = [
            ScoredLine { line: HessianLine::new(100.0, 0.0), support: 40 },
            ScoredLine { line: HessianLine::new(50.0, 90.0), support: 30 },
        ];
        let out = cluster_lines(&lines, 5.0, 20.0);
        assert_eq!(out.len(), 2);
        assert!(cluster_lines(&[], 5.0, 20.0).is_empty());
    }

    #[test]
    fn cluster_merges_across_theta_seam() {
        // A vertical line seen as (100, 1°) and (−100, 179°) is one line.
        let lines = [
            ScoredLine { line: HessianLine::new(100.0, 1.0), support: 60 },
            ScoredLine { line: HessianLine::new(-100.0, 179.0), support: 60 },
        ];
        let merged = cluster_lines(&lines, 5.0, 20.0);
        assert_eq!(merged.len(), 1);
        let (rho, theta) = merged[0].line.vertical_form();
        assert!((rho - 100.0).abs() < 1e-9, "rho {rho}");
        assert!(theta.abs() < 1e-9, "theta {theta}");
    }

    #[test]
    fn classification_bands_on_detections() {
        assert_eq!(HessianLine::new(10.0, 10.0).classify(), LineClass::Vertical);
        assert_eq!(HessianLine::new(10.0, 90.0).classify(), LineClass::Horizontal);
        assert_eq!(HessianLine::new(10.0, 160.0).classify(), LineClass::Vertical);
    }

    #[test]
    fn thin_preserves_component_count_on_hole_free_masks() {
        let mut state = 0x77u64;
        for _ in 0..12 {
            // Union of random rectangles, then fill any enclosed background
            // so the mask is hole-free.
            let mut m = BitMask::new(60, 44);
            for _ in 0..6 {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let x0 = ((state >> 50) % 50) as u32;
                let y0 = ((state >> 40) % 36) as u32;
                let w = 3 + ((state >> 30) % 12) as u32;
                let h = 3 + ((state >> 20) % 10) as u32;
                for y in y0..(y0 + h).min(44) {
                    for x in x0..(x0 + w).min(60) {
                        m.set(x, y, true);
                    }
                }
            }
            let m = fill_holes(&m);
            let before = crate::cc::label(&m).areas.len();
            let thin = zhang_suen_thin(&m);
            let after = crate::cc::label(&thin).areas.len();
            assert_eq!(before, after);
        }
    }

    fn fill_holes(m: &BitMask) -> BitMask {
        let (w, h) = (m.width() as i64, m.height() as i64);
        let mut outside = vec![false; (w * h) as usize];
        let mut stack = Vec::new();
        for x in 0..w {
            for y in [0, h - 1] {
                if !m.get(x as u32, y as u32) {
                    stack.push((x, y));
                }
            }
        }
        for y in 0..h {
            for x in [0, w - 1] {
                if !m.get(x as u32, y as u32) {
                    stack.push((x, y));
                }
            }
        }
        while let Some((x, y)) = stack.pop() {
            if x < 0 || y < 0 || x >= w || y >= h {
                continue;
            }
            let i = (y * w + x) as usize;
            if outside[i] || m.get(x as u32, y as u32) {
                continue;
            }
            outside[i] = true;
            stack.extend([(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)]);
        }
        BitMask::from_fn(m.width(), m.height(), |x, y| {
            m.get(x, y) || !outside[(y as i64 * w + x as i64) as usize]
        })
    }
}
