//! Centroid line detection: slice the thresholded mask on a coverage-driven
//! grid, take the largest component of every slice, reduce it to its moment
//! centroid, and fit lines through the centroid cloud with RANSAC.
//!
//! Averaging each slice of a thick line onto its centreline is what lets this
//! method report sub-pixel ρ on lines dozens of pixels wide, where edge-based
//! detection splits into two offset lines.

use crate::cc;
use crate::error::{Error, Result};
use crate::geom::{HessianLine, Point, ScoredLine};
use crate::raster::BitMask;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Slice counts along image height and width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SliceGrid {
    pub n_height: u32,
    pub n_width: u32,
}

/// Raw region moments up to first order, exact integer sums over set pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Moments {
    pub m00: u64,
    pub m10: u64,
    pub m01: u64,
}

/// Picks the slice grid from mask coverage: `n = clamp(round(2/√c), 4, 32)`
/// on both axes, additionally capped at `min(w, h)/4` so slices never drop
/// below a few pixels. Thin lines (low coverage) get more slices, broad
/// coverage gets fewer. An empty mask returns the minimum grid.
pub fn compute_slice_grid(mask: &BitMask) -> SliceGrid {
    let cap = ((mask.width().min(mask.height()) / 4).max(1)) as u32;
    let count = mask.count();
    if count == 0 {
        let n = 4u32.min(cap);
        return SliceGrid { n_height: n, n_width: n };
    }
    let coverage = count as f64 / (mask.width() as f64 * mask.height() as f64);
    let n = (2.0 / coverage.sqrt()).round().clamp(4.0, 32.0) as u32;
    let n = n.min(cap);
    SliceGrid { n_height: n, n_width: n }
}

/// Mask of the largest 8-connected component. Ties go to the component whose
/// first set pixel comes earliest in row-major order. Empty in, empty out.
pub fn largest_component(sub: &BitMask) -> BitMask {
    let labeled = cc::label(sub);
    if labeled.areas.is_empty() {
        return BitMask::new(sub.width(), sub.height());
    }
    // Component ids are ordered by first row-major pixel, so the first
    // maximum settles ties.
    let mut best = 0u32;
    for (id, &area) in labeled.areas.iter().enumerate() {
        if area > labeled.areas[best as usize] {
            best = id as u32;
        }
    }
    cc::mask_from_runs(sub.width(), sub.height(), &labeled.runs, |r| r.comp == best)
}

/// Raw moments of a binary region: `m00 = Σ1`, `m10 = Σx`, `m01 = Σy`.
pub fn raw_moments(region: &BitMask) -> Moments {
    let mut m = Moments::default();
    for span in cc::spans_of(region) {
        let len = span.len();
        m.m00 += len;
        // Sum of consecutive integers x0 .. x1-1.
        m.m10 += (span.x0 as u64 + span.x1 as u64 - 1) * len / 2;
        m.m01 += span.y as u64 * len;
    }
    m
}

/// Centroid `(m10/m00, m01/m00)`; zero-area regions have no centroid.
pub fn centroid_of(m: &Moments) -> Result<Point> {
    if m.m00 == 0 {
        return Err(Error::NoCentroid);
    }
    Ok(Point::new(m.m10 as f64 / m.m00 as f64, m.m01 as f64 / m.m00 as f64))
}

/// One centroid per grid slice, from the slice's largest component, in
/// global image coordinates. Slices with no set pixels contribute nothing.
/// Output order is slice-major (rows of slices, then columns).
pub fn extract_centroids(mask: &BitMask, grid: SliceGrid) -> Vec<Point> {
    let (w, h) = (mask.width(), mask.height());
    let (nh, nw) = (grid.n_height.max(1), grid.n_width.max(1));
    let spans = cc::spans_of(mask);
    let mut out = Vec::new();

    let mut band_start = 0usize;
    for sy in 0..nh {
        let y0 = (sy as u64 * h as u64 / nh as u64) as u32;
        let y1 = ((sy as u64 + 1) * h as u64 / nh as u64) as u32;
        // Spans are row-major; collect this band's range.
        while band_start < spans.len() && spans[band_start].y < y0 {
            band_start += 1;
        }
        let mut band_end = band_start;
        while band_end < spans.len() && spans[band_end].y < y1 {
            band_end += 1;
        }
        let band = &spans[band_start..band_end];
        band_start = band_end;

        // Clip the band's spans into each column slice.
        let mut per_slice: Vec<Vec<cc::Span>> = vec![Vec::new(); nw as usize];
        for span in band {
            let sx_first = (span.x0 as u64 * nw as u64 / w as u64) as u32;
            let sx_last = ((span.x1 as u64 - 1) * nw as u64 / w as u64) as u32;
            for sx in sx_first..=sx_last.min(nw - 1) {
                let cx0 = (sx as u64 * w as u64 / nw as u64) as u32;
                let cx1 = ((sx as u64 + 1) * w as u64 / nw as u64) as u32;
                let x0 = span.x0.max(cx0);
                let x1 = span.x1.min(cx1);
                if x0 < x1 {
                    per_slice[sx as usize].push(cc::Span { y: span.y, x0, x1 });
                }
            }
        }

        for slice_spans in &per_slice {
            if slice_spans.is_empty() {
                continue;
            }
            let labeled = cc::label_spans(slice_spans);
            let mut best = 0u32;
            for (id, &area) in labeled.areas.iter().enumerate() {
                if area > labeled.areas[best as usize] {
                    best = id as u32;
                }
            }
            let mut m = Moments::default();
            for run in labeled.runs.iter().filter(|r| r.comp == best) {
                let len = run.span.len();
                m.m00 += len;
                m.m10 += (run.span.x0 as u64 + run.span.x1 as u64 - 1) * len / 2;
                m.m01 += run.span.y as u64 * len;
            }
            if let Ok(p) = centroid_of(&m) {
                out.push(p);
            }
        }
    }
    out
}

/// Total-least-squares line through a point set (perpendicular residuals).
fn tls_fit(points: &[Point]) -> HessianLine {
    let n = points.len() as f64;
    let (mut mx, mut my) = (0.0, 0.0);
    for p in points {
        mx += p.x;
        my += p.y;
    }
    mx /= n;
    my /= n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.x - mx, p.y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // Principal direction of the scatter; the line normal is perpendicular.
    let principal = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let theta = principal.to_degrees() + 90.0;
    let t = theta.to_radians();
    let rho = mx * t.cos() + my * t.sin();
    HessianLine::new(rho, theta)
}

fn line_through(a: Point, b: Point) -> Option<HessianLine> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    if dx.abs() < 1e-12 && dy.abs() < 1e-12 {
        return None;
    }
    let theta = dy.atan2(dx).to_degrees() + 90.0;
    let t = theta.to_radians();
    Some(HessianLine::new(a.x * t.cos() + a.y * t.sin(), theta))
}

fn inliers_of(line: &HessianLine, points: &[Point], tol: f64) -> Vec<usize> {
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| line.signed_distance(p.x, p.y).abs() <= tol)
        .map(|(i, _)| i)
        .collect()
}

/// Order-independent residual score of a candidate inlier set.
fn residual_sum(line: &HessianLine, points: &[Point], idx: &[usize]) -> f64 {
    let mut residuals: Vec<f64> =
        idx.iter().map(|&i| line.signed_distance(points[i].x, points[i].y).abs()).collect();
    residuals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    residuals.iter().sum()
}

const MIN_CONSENSUS: usize = 4;
const EXHAUSTIVE_LIMIT: usize = 20;

/// Sequential multi-line RANSAC over a centroid cloud: fit the best line,
/// refit by total least squares on its inliers, remove them, repeat while at
/// least four points remain and the best consensus reaches four. With 20 or
/// fewer points the minimal-sample search enumerates every pair, which makes
/// the result independent of input order; larger sets sample pairs from a
/// seeded generator.
pub fn ransac_line_fit(
    points: &[Point],
    inlier_tol: f64,
    max_iters: u32,
    rng_seed: u64,
) -> Result<Vec<ScoredLine>> {
    if inlier_tol <= 0.0 {
        return Err(Error::invalid("inlier_tol must be positive"));
    }
    if points.len() < 2 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut remaining: Vec<Point> = points.to_vec();
    let mut out = Vec::new();

    while remaining.len() >= MIN_CONSENSUS {
        let mut best: Option<(Vec<usize>, f64)> = None;

        let consider = |cand: HessianLine, best: &mut Option<(Vec<usize>, f64)>| {
            let idx = inliers_of(&cand, &remaining, inlier_tol);
            if idx.len() < 2 {
                return;
            }
            let score = residual_sum(&cand, &remaining, &idx);
            let better = match best {
                None => true,
                Some((bidx, bscore)) => {
                    idx.len() > bidx.len() || (idx.len() == bidx.len() && score < *bscore)
                }
            };
            if better {
                *best = Some((idx, score));
            }
        };

        if remaining.len() <= EXHAUSTIVE_LIMIT {
            for i in 0..remaining.len() {
                for j in i + 1..remaining.len() {
                    if let Some(cand) = line_through(remaining[i], remaining[j]) {
                        consider(cand, &mut best);
                    }
                }
            }
        } else {
            for _ in 0..max_iters {
                let i = rng.gen_range(0..remaining.len());
                let mut j = rng.gen_range(0..remaining.len() - 1);
                if j >= i {
                    j += 1;
                }
                if let Some(cand) = line_through(remaining[i], remaining[j]) {
                    consider(cand, &mut best);
                }
            }
        }

        let Some((idx, _)) = best else { break };
        if idx.len() < MIN_CONSENSUS {
            break;
        }

        // Canonical order before the refit keeps the whole pipeline
        // independent of the caller's point order.
        let mut inlier_pts: Vec<Point> = idx.iter().map(|&i| remaining[i]).collect();
        inlier_pts.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
        let line = tls_fit(&inlier_pts);
        out.push(ScoredLine { line, support: idx.len() as u32 });

        let drop: std::collections::HashSet<usize> = idx.into_iter().collect();
        remaining = remaining
            .into_iter()
            .enumerate()
            .filter(|(i, _)| !drop.contains(i))
            .map(|(_, p)| p)
            .collect();
    }

    Ok(out)
}
