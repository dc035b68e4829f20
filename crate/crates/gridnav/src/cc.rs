//! Run-based 8-connected component labeling over bit masks. Internal
//! machinery behind region growing and per-slice largest-component picks;
//! runs keep the hot path linear in the number of set-pixel spans rather
//! than in image area.

use crate::raster::BitMask;

/// Horizontal span of set pixels: columns `[x0, x1)` on row `y`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Span {
    pub y: u32,
    pub x0: u32,
    pub x1: u32,
}

impl Span {
    pub fn len(&self) -> u64 {
        (self.x1 - self.x0) as u64
    }
}

/// A span tagged with its compact component id.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Run {
    pub span: Span,
    pub comp: u32,
}

#[derive(Debug)]
pub(crate) struct Labeled {
    /// Runs in row-major order. Component ids are compact and ordered by
    /// each component's first (row-major) pixel.
    pub runs: Vec<Run>,
    /// Pixel area per component id.
    pub areas: Vec<u64>,
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new() -> Self {
        UnionFind { parent: Vec::new() }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let gp = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = gp;
            x = gp;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Lower root wins so roots stay row-major stable.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

/// Extracts all set-pixel spans of `mask` in row-major order.
pub(crate) fn spans_of(mask: &BitMask) -> Vec<Span> {
    let mut out = Vec::new();
    let w = mask.width();
    for y in 0..mask.height() {
        let mut x = 0u32;
        while x < w {
            if mask.get(x, y) {
                let x0 = x;
                while x < w && mask.get(x, y) {
                    x += 1;
                }
                out.push(Span { y, x0, x1: x });
            } else {
                x += 1;
            }
        }
    }
    out
}

/// Labels 8-connected components over row-major sorted, per-row disjoint
/// spans. Spans on rows that differ by more than one never merge.
pub(crate) fn label_spans(spans: &[Span]) -> Labeled {
    let mut uf = UnionFind::new();
    let mut provisional: Vec<u32> = Vec::with_capacity(spans.len());
    let mut prev: &[usize] = &[];
    let mut prev_buf: Vec<usize> = Vec::new();
    let mut cur_buf: Vec<usize> = Vec::new();

    let mut i = 0usize;
    while i < spans.len() {
        let y = spans[i].y;
        let row_end = spans[i..].iter().position(|s| s.y != y).map_or(spans.len(), |p| i + p);

        cur_buf.clear();
        let mut pi = 0usize;
        for (si, span) in spans[i..row_end].iter().enumerate() {
            let mut comp = None;
            // Skip previous-row spans ending left of any possible contact.
            while pi < prev.len() {
                let p = spans[prev[pi]];
                if p.y + 1 != y || (p.x1 as u64) < span.x0 as u64 {
                    pi += 1;
                } else {
                    break;
                }
            }
            // All spans from pi while p.x0 <= span.x1 touch under
            // 8-connectivity (column ranges within ±1).
            let mut pj = pi;
            while pj < prev.len() {
                let p = spans[prev[pj]];
                if p.y + 1 != y || p.x0 as u64 > span.x1 as u64 {
                    break;
                }
                let pc = provisional[prev[pj]];
                match comp {
                    None => comp = Some(pc),
                    Some(c) => uf.union(c, pc),
                }
                pj += 1;
            }
            let comp = comp.unwrap_or_else(|| uf.make());
            provisional.push(comp);
            cur_buf.push(i + si);
        }

        std::mem::swap(&mut prev_buf, &mut cur_buf);
        prev = &prev_buf;
        i = row_end;
    }

    // Compact component ids in row-major first-appearance order.
    let mut compact: Vec<u32> = vec![u32::MAX; uf.parent.len()];
    let mut areas: Vec<u64> = Vec::new();
    let mut runs = Vec::with_capacity(spans.len());
    for (span, &prov) in spans.iter().zip(&provisional) {
        let root = uf.find(prov);
        if compact[root as usize] == u32::MAX {
            compact[root as usize] = areas.len() as u32;
            areas.push(0);
        }
        let comp = compact[root as usize];
        areas[comp as usize] += span.len();
        runs.push(Run { span: *span, comp });
    }

    Labeled { runs, areas }
}

/// Labels all 8-connected components of `mask`.
pub(crate) fn label(mask: &BitMask) -> Labeled {
    label_spans(&spans_of(mask))
}

/// Rebuilds a mask from the runs that satisfy `keep`.
pub(crate) fn mask_from_runs(
    width: u32,
    height: u32,
    runs: &[Run],
    mut keep: impl FnMut(&Run) -> bool,
) -> BitMask {
    let mut m = BitMask::new(width, height);
    for run in runs {
        if keep(run) {
            for x in run.span.x0..run.span.x1 {
                m.set(x, run.span.y, true);
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from_str(rows: &[&str]) -> BitMask {
        let h = rows.len() as u32;
        let w = rows[0].len() as u32;
        BitMask::from_fn(w, h, |x, y| rows[y as usize].as_bytes()[x as usize] == b'#')
    }

    #[test]
    fn labels_diagonal_as_one_component() {
        let m = mask_from_str(&["#..", ".#.", "..#"]);
        let l = label(&m);
        assert_eq!(l.areas, vec![3]);
    }

    #[test]
    fn separates_disjoint_blobs() {
        let m = mask_from_str(&["##..#", "##..#", ".....", "#...."]);
        let l = label(&m);
        let mut areas = l.areas.clone();
        areas.sort_unstable();
        assert_eq!(areas, vec![1, 2, 4]);
    }

    #[test]
    fn u_shape_merges_arms() {
        let m = mask_from_str(&["#.#", "#.#", "###"]);
        let l = label(&m);
        assert_eq!(l.areas, vec![7]);
    }

    #[test]
    fn component_ids_are_row_major_by_first_pixel() {
        let m = mask_from_str(&[".#.#.", ".#.#."]);
        let l = label(&m);
        assert_eq!(l.areas.len(), 2);
        let first = l.runs.iter().find(|r| r.comp == 0).unwrap();
        assert_eq!((first.span.y, first.span.x0), (0, 1));
    }

    #[test]
    fn row_gaps_split_components() {
        let m = mask_from_str(&["###", "...", "###"]);
        let l = label(&m);
        assert_eq!(l.areas, vec![3, 3]);
    }

    /// Oracle: straightforward BFS flood fill.
    fn bfs_areas(mask: &BitMask) -> Vec<u64> {
        let (w, h) = (mask.width() as i64, mask.height() as i64);
        let mut seen = vec![false; (w * h) as usize];
        let mut areas = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if !mask.get(x as u32, y as u32) || seen[(y * w + x) as usize] {
                    continue;
                }
                let mut stack = vec![(x, y)];
                seen[(y * w + x) as usize] = true;
                let mut area = 0u64;
                while let Some((cx, cy)) = stack.pop() {
                    area += 1;
                    for dy in -1..=1i64 {
                        for dx in -1..=1i64 {
                            let (nx, ny) = (cx + dx, cy + dy);
                            if nx >= 0
                                && ny >= 0
                                && nx < w
                                && ny < h
                                && mask.get(nx as u32, ny as u32)
                                && !seen[(ny * w + nx) as usize]
                            {
                                seen[(ny * w + nx) as usize] = true;
                                stack.push((nx, ny));
                            }
                        }
                    }
                }
                areas.push(area);
            }
        }
        areas
    }

    #[test]
    fn matches_bfs_oracle_on_random_masks() {
        let mut state = 0x8d5c_1f2eu64;
        for _ in 0..40 {
            let m = BitMask::from_fn(37, 23, |_, _| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 61) < 3
            });
            let mut ours = label(&m).areas;
            let mut oracle = bfs_areas(&m);
            ours.sort_unstable();
            oracle.sort_unstable();
            assert_eq!(ours, oracle);
        }
    }
}
