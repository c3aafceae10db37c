//! Uniform grid over the window accelerating nearest-street-point queries.
//!
//! Every edge is registered in each cell its bounding box touches. Queries
//! expand outward ring by ring and stop once the best candidate is strictly
//! closer than anything an unsearched cell could hold, so results (and the
//! lowest-edge-id tie-break) are exact, not approximate.

use super::Edge;
use crate::geometry::{project_onto_segment, Point};

#[derive(Clone, Debug)]
pub(super) struct GridIndex {
    n: usize,
    cell: f64,
    buckets: Vec<Vec<u32>>,
}

pub(super) struct Nearest {
    pub edge: u32,
    /// Projection parameter along the edge in [0, 1].
    pub t: f64,
    pub dist2: f64,
}

impl GridIndex {
    pub fn build(vertices: &[Point], edges: &[Edge], window: f64) -> GridIndex {
        // Aim for cells about one mean edge length across: a Voronoi
        // skeleton has roughly 3 edges per cell at that resolution.
        let n = ((edges.len().max(1) as f64 / 3.0).sqrt().ceil() as usize).clamp(1, 4096);
        let cell = window / n as f64;
        let mut buckets = vec![Vec::new(); n * n];
        for (i, e) in edges.iter().enumerate() {
            let (pa, pb) = (vertices[e.a.index()], vertices[e.b.index()]);
            let (x0, x1) = clamp_range(pa.x.min(pb.x), pa.x.max(pb.x), cell, n);
            let (y0, y1) = clamp_range(pa.y.min(pb.y), pa.y.max(pb.y), cell, n);
            for iy in y0..=y1 {
                for ix in x0..=x1 {
                    buckets[iy * n + ix].push(i as u32);
                }
            }
        }
        GridIndex { n, cell, buckets }
    }

    pub fn nearest(&self, p: Point, vertices: &[Point], edges: &[Edge]) -> Option<Nearest> {
        if edges.is_empty() {
            return None;
        }
        let idx = |coord: f64| -> isize { (coord / self.cell).floor() as isize };
        let cx = idx(p.x).clamp(0, self.n as isize - 1);
        let cy = idx(p.y).clamp(0, self.n as isize - 1);
        let mut best: Option<Nearest> = None;

        let max_ring =
            [cx, self.n as isize - 1 - cx, cy, self.n as isize - 1 - cy].into_iter().max().unwrap();
        for ring in 0..=max_ring {
            self.scan_ring(p, cx, cy, ring, vertices, edges, &mut best);
            // Distance from p to the nearest cell not yet searched; sides
            // of the searched square lying outside the grid have no
            // unsearched cells behind them.
            let mut d_out = f64::INFINITY;
            if cx - ring > 0 {
                d_out = d_out.min((p.x - (cx - ring) as f64 * self.cell).max(0.0));
            }
            if cx + ring < self.n as isize - 1 {
                d_out = d_out.min(((cx + ring + 1) as f64 * self.cell - p.x).max(0.0));
            }
            if cy - ring > 0 {
                d_out = d_out.min((p.y - (cy - ring) as f64 * self.cell).max(0.0));
            }
            if cy + ring < self.n as isize - 1 {
                d_out = d_out.min(((cy + ring + 1) as f64 * self.cell - p.y).max(0.0));
            }
            if let Some(b) = &best {
                // Strict: an unsearched edge at exactly the same distance
                // could still win the lowest-id tie-break.
                if b.dist2 < d_out * d_out {
                    break;
                }
            }
        }
        best
    }

    fn scan_ring(
        &self,
        p: Point,
        cx: isize,
        cy: isize,
        ring: isize,
        vertices: &[Point],
        edges: &[Edge],
        best: &mut Option<Nearest>,
    ) {
        let n = self.n as isize;
        let mut visit = |ix: isize, iy: isize| {
            if ix < 0 || iy < 0 || ix >= n || iy >= n {
                return;
            }
            for &ei in &self.buckets[(iy * n + ix) as usize] {
                let e = &edges[ei as usize];
                let (pa, pb) = (vertices[e.a.index()], vertices[e.b.index()]);
                let (t, d2) = project_onto_segment(p, pa, pb);
                let offset = t * e.length;
                let better = match best {
                    None => true,
                    Some(b) => {
                        let b_off = b.t * edges[b.edge as usize].length;
                        (d2, ei, offset) < (b.dist2, b.edge, b_off)
                    }
                };
                if better {
                    *best = Some(Nearest { edge: ei, t, dist2: d2 });
                }
            }
        };
        if ring == 0 {
            visit(cx, cy);
            return;
        }
        for ix in (cx - ring)..=(cx + ring) {
            visit(ix, cy - ring);
            visit(ix, cy + ring);
        }
        for iy in (cy - ring + 1)..=(cy + ring - 1) {
            visit(cx - ring, iy);
            visit(cx + ring, iy);
        }
    }
}

fn clamp_range(lo: f64, hi: f64, cell: f64, n: usize) -> (usize, usize) {
    let i0 = ((lo / cell).floor() as isize).clamp(0, n as isize - 1) as usize;
    let i1 = ((hi / cell).floor() as isize).clamp(0, n as isize - 1) as usize;
    (i0, i1)
}
