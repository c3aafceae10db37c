//! Poisson-Voronoi street-system generation.
//!
//! Tessellation seeds are a homogeneous Poisson process on the window
//! padded by `3 / sqrt(lambda)` on every side; the padding keeps the
//! diagram inside `[0, H]^2` distributionally indistinguishable from one
//! cut out of the whole plane. The Voronoi skeleton is the dual of the
//! Delaunay triangulation: one vertex per triangle circumcenter, one edge
//! per adjacent triangle pair, plus outward rays for hull edges. Segments
//! are clipped to the window and sub-nanometre edges are contracted.

use delaunator::{triangulate, Point as DPoint, EMPTY};
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::MIN_EDGE_LEN;
use crate::geometry::{clip_segment_to_window, Point};
use crate::rng::rng_from;
use crate::{Error, Result};

pub(super) struct RawParts {
    pub vertices: Vec<Point>,
    pub pairs: Vec<(u32, u32)>,
}

pub(super) fn generate_raw(
    lambda: f64,
    window: f64,
    seed: u64,
    max_edges: usize,
) -> Result<RawParts> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "intensity must be positive and finite, got {lambda}"
        )));
    }
    if !(window > 0.0) || !window.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "window must be positive and finite, got {window}"
        )));
    }
    let pad = 3.0 / lambda.sqrt();
    let side = window + 2.0 * pad;
    let area = side * side;
    // A planar Voronoi tessellation has ~3 edges per seed.
    let expected_edges = 3.0 * lambda * area;
    if expected_edges > max_edges as f64 {
        return Err(Error::InstanceTooLarge(format!(
            "expected ~{expected_edges:.0} edges exceeds the cap of {max_edges}; \
             shrink the window or the intensity"
        )));
    }

    let mut rng = rng_from(seed);
    let n = Poisson::new(lambda * area)
        .expect("positive mean")
        .sample(&mut rng) as usize;
    let mut seeds = Vec::with_capacity(n);
    for _ in 0..n {
        let x = rng.gen_range(-pad..window + pad);
        let y = rng.gen_range(-pad..window + pad);
        seeds.push(DPoint { x, y });
    }
    build_from_seeds(&seeds, window, max_edges)
}

/// Build the clipped Voronoi skeleton of explicit tessellation seeds.
/// Separated from the sampling so the degenerate branches are reachable:
/// the padded window keeps the expected seed count at 36+ for every
/// intensity, which makes fewer-than-three draws astronomically rare.
pub(super) fn build_from_seeds(
    seeds: &[DPoint],
    window: f64,
    max_edges: usize,
) -> Result<RawParts> {
    let n = seeds.len();
    if n < 3 {
        return Err(Error::DegenerateTessellation(format!(
            "only {n} tessellation seeds fell in the padded window"
        )));
    }
    let side = {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in seeds {
            lo = lo.min(p.x).min(p.y);
            hi = hi.max(p.x).max(p.y);
        }
        (hi - lo).max(window)
    };

    let tri = triangulate(seeds);
    if tri.triangles.is_empty() {
        return Err(Error::DegenerateTessellation(
            "tessellation seeds are collinear".into(),
        ));
    }

    let n_tris = tri.triangles.len() / 3;
    let mut centers = Vec::with_capacity(n_tris);
    for t in 0..n_tris {
        let a = &seeds[tri.triangles[3 * t]];
        let b = &seeds[tri.triangles[3 * t + 1]];
        let c = &seeds[tri.triangles[3 * t + 2]];
        centers.push(circumcenter(a, b, c));
    }
    let centroid = {
        let (mut sx, mut sy) = (0.0, 0.0);
        for p in seeds {
            sx += p.x;
            sy += p.y;
        }
        Point::new(sx / n as f64, sy / n as f64)
    };

    let mut vertices: Vec<Point> = Vec::new();
    let mut tri_vertex: Vec<u32> = vec![u32::MAX; n_tris];
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    let mut vertex_for_center = |t: usize, vertices: &mut Vec<Point>| -> u32 {
        if tri_vertex[t] == u32::MAX {
            tri_vertex[t] = vertices.len() as u32;
            vertices.push(centers[t]);
        }
        tri_vertex[t]
    };

    for e in 0..tri.triangles.len() {
        let twin = tri.halfedges[e];
        let t = e / 3;
        let (qa, qb, is_ray) = if twin == EMPTY {
            // Hull edge: the dual is a ray from this circumcenter along the
            // perpendicular bisector of the hull edge, pointing away from
            // the point cloud. A long finite stand-in is enough: only the
            // part inside the window survives clipping.
            let p = &seeds[tri.triangles[e]];
            let q = &seeds[tri.triangles[next_halfedge(e)]];
            let mid = Point::new((p.x + q.x) / 2.0, (p.y + q.y) / 2.0);
            let mut dir = Point::new(q.y - p.y, p.x - q.x);
            if dir.dot(mid - centroid) < 0.0 {
                dir = dir * -1.0;
            }
            let norm = dir.norm();
            if norm == 0.0 {
                continue; // coincident seeds; ray undefined, nothing to cut
            }
            let c = centers[t];
            let reach = 4.0 * side + 2.0 * c.dist(centroid);
            (c, c + dir * (reach / norm), true)
        } else if e < twin {
            (centers[t], centers[twin / 3], false)
        } else {
            continue; // twin already emitted this edge
        };

        let Some((pa, pb, t0, t1)) = clip_segment_to_window(qa, qb, window) else {
            continue;
        };
        let ia = if t0 == 0.0 {
            vertex_for_center(t, &mut vertices)
        } else {
            vertices.push(pa);
            vertices.len() as u32 - 1
        };
        let ib = if !is_ray && t1 == 1.0 {
            vertex_for_center(twin / 3, &mut vertices)
        } else {
            debug_assert!(is_ray || t1 < 1.0);
            vertices.push(pb);
            vertices.len() as u32 - 1
        };
        pairs.push((ia, ib));
    }

    let parts = contract_tiny_edges(vertices, pairs);
    if parts.pairs.len() > max_edges {
        return Err(Error::InstanceTooLarge(format!(
            "{} edges exceed the cap of {max_edges}",
            parts.pairs.len()
        )));
    }
    Ok(parts)
}

/// Merge vertices joined by sub-[`MIN_EDGE_LEN`] edges and drop those
/// edges, then compact ids. Without this, near-cocircular seed quadruples
/// leave zero-length Voronoi edges that break downstream arithmetic.
fn contract_tiny_edges(vertices: Vec<Point>, pairs: Vec<(u32, u32)>) -> RawParts {
    let mut parent: Vec<u32> = (0..vertices.len() as u32).collect();
    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }
    for &(a, b) in &pairs {
        if vertices[a as usize].dist(vertices[b as usize]) < MIN_EDGE_LEN {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                // Lower root wins so representatives are deterministic.
                let (lo, hi) = (ra.min(rb), ra.max(rb));
                parent[hi as usize] = lo;
            }
        }
    }
    let mut remap: Vec<u32> = vec![u32::MAX; vertices.len()];
    let mut out_vertices = Vec::new();
    let mut out_pairs = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for &(a, b) in &pairs {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            continue; // contracted away
        }
        let mut id_of = |r: u32, out: &mut Vec<Point>| -> u32 {
            if remap[r as usize] == u32::MAX {
                remap[r as usize] = out.len() as u32;
                out.push(vertices[r as usize]);
            }
            remap[r as usize]
        };
        let (ia, ib) = (id_of(ra, &mut out_vertices), id_of(rb, &mut out_vertices));
        if seen.insert((ia.min(ib), ia.max(ib))) {
            out_pairs.push((ia, ib));
        }
    }
    RawParts { vertices: out_vertices, pairs: out_pairs }
}

fn next_halfedge(e: usize) -> usize {
    if e % 3 == 2 {
        e - 2
    } else {
        e + 1
    }
}

/// Circumcenter via coordinates relative to `a` for numerical stability.
/// The formula is orientation-independent; near-collinear triangles give
/// far-away centers, which clipping then discards.
fn circumcenter(a: &DPoint, b: &DPoint, c: &DPoint) -> Point {
    let bx = b.x - a.x;
    let by = b.y - a.y;
    let cx = c.x - a.x;
    let cy = c.y - a.y;
    let d = 2.0 * (bx * cy - by * cx);
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    let ux = (cy * b2 - by * c2) / d;
    let uy = (bx * c2 - cx * b2) / d;
    Point::new(a.x + ux, a.y + uy)
}
