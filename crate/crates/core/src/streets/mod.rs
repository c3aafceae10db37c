//! Random street systems.
//!
//! A street system is the edge skeleton of a planar tessellation clipped to
//! the square observation window `[0, H]^2`: straight street segments
//! meeting at crossings. [`StreetSystem::generate`] builds one from a
//! Poisson-Voronoi tessellation whose seeds form a homogeneous Poisson
//! process of intensity `lambda` per km^2; seeds are sampled on a padded
//! window so the geometry inside `[0, H]^2` is unbiased by the boundary.
//!
//! On top of the graph sit the three queries everything else needs:
//! nearest street point (grid-accelerated), shortest street path (A* with
//! deterministic tie-breaking) and edge-length statistics.

mod grid;
mod io;
mod voronoi;

use std::fmt;
use std::sync::Arc;

use crate::geometry::{Point, GEOM_TOL};
use crate::stats::Histogram;
use crate::{Error, Result};

/// Edges shorter than this (km) are contracted away during construction:
/// they are numerical debris from near-cocircular tessellation seeds.
pub const MIN_EDGE_LEN: f64 = 1e-12;

/// Default cap on the number of edges a single generated system may have.
pub const DEFAULT_MAX_EDGES: usize = 4_000_000;

/// Interior-edge sample size below which length statistics are flagged
/// as unreliable.
const RELIABLE_INTERIOR_MIN: usize = 100;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct VertexId(pub u32);

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct EdgeId(pub u32);

impl VertexId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl EdgeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A street: a straight segment between two crossings. `length` always
/// equals the Euclidean distance of its endpoints.
#[derive(Clone, Debug)]
pub struct Edge {
    pub a: VertexId,
    pub b: VertexId,
    pub length: f64,
    /// True when the segment was cut by the window boundary, i.e. has an
    /// endpoint on it. Clipped edges are excluded from length statistics.
    pub clipped: bool,
    /// Connected-component label of the street graph.
    pub component: u32,
}

/// A position on the street system: a point `offset` km along edge `edge`
/// measured from endpoint `a`, with the planar coordinates cached.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreetPoint {
    pub edge: EdgeId,
    pub offset: f64,
    pub coords: Point,
}

/// One leg of a street path: walk edge `edge` from `from` to `to` (offsets
/// in km from the edge's `a` endpoint; `from > to` means walking against
/// the edge's canonical direction).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathSegment {
    pub edge: EdgeId,
    pub from: f64,
    pub to: f64,
}

impl PathSegment {
    pub fn len(&self) -> f64 {
        (self.to - self.from).abs()
    }

    pub fn is_empty(&self) -> bool {
        self.from == self.to
    }
}

/// A shortest street path; `length` is the sum of segment lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct StreetPath {
    pub segments: Vec<PathSegment>,
    pub length: f64,
}

/// Summary of the edge-length law of a system, computed from interior
/// (non-clipped) edges only: clipped edges are censored observations.
#[derive(Clone, Debug)]
pub struct EdgeLengthStats {
    pub mean: f64,
    pub variance: f64,
    pub histogram: Histogram,
    pub interior_count: usize,
    pub clipped_count: usize,
    /// Total length of all edges (clipped included) in the window, km.
    pub total_length: f64,
    /// `total_length / H^2`, km of street per km^2.
    pub length_intensity: f64,
    /// False when too few interior edges survive for the law to mean much.
    pub reliable: bool,
}

#[derive(Clone, Debug)]
pub struct StreetSystem {
    vertices: Vec<Point>,
    edges: Vec<Edge>,
    /// Incident edge ids per vertex, ascending.
    adjacency: Vec<Vec<EdgeId>>,
    window: f64,
    intensity: f64,
    seed: u64,
    /// Total edge length per component.
    component_lengths: Vec<f64>,
    largest_component: u32,
    grid: grid::GridIndex,
}

impl StreetSystem {
    /// Generate the street system of a Poisson-Voronoi tessellation with
    /// seed intensity `lambda` (per km^2) on the window `[0, window]^2`,
    /// with the default edge cap.
    ///
    /// Fails with [`Error::DegenerateTessellation`] when fewer than three
    /// seeds fall in the padded window (or all are collinear), and with
    /// [`Error::InstanceTooLarge`] when the expected edge count exceeds
    /// the cap.
    pub fn generate(lambda: f64, window: f64, seed: u64) -> Result<Arc<StreetSystem>> {
        Self::generate_with_cap(lambda, window, seed, DEFAULT_MAX_EDGES)
    }

    /// [`StreetSystem::generate`] with an explicit edge cap.
    pub fn generate_with_cap(
        lambda: f64,
        window: f64,
        seed: u64,
        max_edges: usize,
    ) -> Result<Arc<StreetSystem>> {
        let parts = voronoi::generate_raw(lambda, window, seed, max_edges)?;
        let sys = Self::from_parts(window, lambda, seed, parts.vertices, parts.pairs)?;
        Ok(Arc::new(sys))
    }

    /// Assemble a street system from explicit geometry. Edge lengths,
    /// clipped flags (endpoint on the window boundary) and component
    /// labels are derived here, so callers only supply coordinates and
    /// the vertex pairs.
    pub fn from_parts(
        window: f64,
        intensity: f64,
        seed: u64,
        vertices: Vec<Point>,
        pairs: Vec<(u32, u32)>,
    ) -> Result<StreetSystem> {
        if !(window > 0.0) || !window.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "window must be positive and finite, got {window}"
            )));
        }
        let n = vertices.len() as u32;
        for (i, p) in vertices.iter().enumerate() {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::InvalidParameter(format!("vertex {i} not finite")));
            }
            let inside = (-GEOM_TOL..=window + GEOM_TOL).contains(&p.x)
                && (-GEOM_TOL..=window + GEOM_TOL).contains(&p.y);
            if !inside {
                return Err(Error::InvalidParameter(format!(
                    "vertex {i} at ({}, {}) lies outside the window [0, {window}]^2",
                    p.x, p.y
                )));
            }
        }
        let mut edges = Vec::with_capacity(pairs.len());
        for (i, &(a, b)) in pairs.iter().enumerate() {
            if a >= n || b >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge {i} references missing vertex"
                )));
            }
            if a == b {
                return Err(Error::InvalidParameter(format!("edge {i} is a self-loop")));
            }
            let (pa, pb) = (vertices[a as usize], vertices[b as usize]);
            let length = pa.dist(pb);
            if length < MIN_EDGE_LEN {
                return Err(Error::InvalidParameter(format!(
                    "edge {i} is degenerate (length {length})"
                )));
            }
            let clipped = on_boundary(pa, window) || on_boundary(pb, window);
            edges.push(Edge { a: VertexId(a), b: VertexId(b), length, clipped, component: 0 });
        }

        let mut adjacency = vec![Vec::new(); vertices.len()];
        for (i, e) in edges.iter().enumerate() {
            adjacency[e.a.index()].push(EdgeId(i as u32));
            adjacency[e.b.index()].push(EdgeId(i as u32));
        }
        // Pushed in ascending edge order already; keep the invariant explicit.
        for adj in &mut adjacency {
            adj.sort_unstable();
        }

        let (vertex_component, component_lengths) = label_components(vertices.len(), &edges);
        for e in &mut edges {
            e.component = vertex_component[e.a.index()];
            debug_assert_eq!(e.component, vertex_component[e.b.index()]);
        }
        let largest_component = component_lengths
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i as u32)
            .unwrap_or(0);

        let grid = grid::GridIndex::build(&vertices, &edges, window);
        Ok(StreetSystem {
            vertices,
            edges,
            adjacency,
            window,
            intensity,
            seed,
            component_lengths,
            largest_component,
            grid,
        })
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    /// Tessellation seed intensity used at generation time (per km^2);
    /// zero for hand-assembled systems.
    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex(&self, v: VertexId) -> Point {
        self.vertices[v.index()]
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        &self.edges[e.index()]
    }

    pub fn edges(&self) -> impl Iterator<Item = (EdgeId, &Edge)> {
        self.edges.iter().enumerate().map(|(i, e)| (EdgeId(i as u32), e))
    }

    pub fn incident_edges(&self, v: VertexId) -> &[EdgeId] {
        &self.adjacency[v.index()]
    }

    pub fn edge_endpoints(&self, e: EdgeId) -> (Point, Point) {
        let edge = self.edge(e);
        (self.vertex(edge.a), self.vertex(edge.b))
    }

    /// Planar coordinates `offset` km along edge `e` from its `a` endpoint.
    pub fn point_on_edge(&self, e: EdgeId, offset: f64) -> Point {
        let edge = self.edge(e);
        let (pa, pb) = self.edge_endpoints(e);
        pa.lerp(pb, offset / edge.length)
    }

    /// Unit vector along edge `e` from `a` to `b`.
    pub fn edge_direction(&self, e: EdgeId) -> Point {
        let (pa, pb) = self.edge_endpoints(e);
        (pb - pa) * (1.0 / self.edge(e).length)
    }

    /// Validated street-point constructor: snaps offsets within tolerance
    /// of the edge ends and caches the planar coordinates.
    pub fn street_point(&self, e: EdgeId, offset: f64) -> Result<StreetPoint> {
        if e.index() >= self.edges.len() {
            return Err(Error::InvalidStreetReference(format!("no edge {e}")));
        }
        let len = self.edge(e).length;
        if !(-GEOM_TOL..=len + GEOM_TOL).contains(&offset) {
            return Err(Error::InvalidStreetReference(format!(
                "offset {offset} outside edge {e} of length {len}"
            )));
        }
        let offset = offset.clamp(0.0, len);
        Ok(StreetPoint { edge: e, offset, coords: self.point_on_edge(e, offset) })
    }

    /// Component label of an edge.
    pub fn component_of(&self, e: EdgeId) -> u32 {
        self.edge(e).component
    }

    pub fn n_components(&self) -> usize {
        self.component_lengths.len()
    }

    /// Label of the component with the greatest total street length.
    pub fn largest_component(&self) -> u32 {
        self.largest_component
    }

    /// Total street length in the window, clipped edges included (km).
    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    /// Lengths of interior (non-clipped) edges.
    pub fn interior_lengths(&self) -> Vec<f64> {
        self.edges.iter().filter(|e| !e.clipped).map(|e| e.length).collect()
    }

    /// The street point closest to `p` in Euclidean distance. Ties are
    /// broken toward the lowest edge id, then the smallest offset. `p`
    /// may lie outside the window. Fails only on an edgeless system.
    pub fn nearest_street_point(&self, p: Point) -> Result<StreetPoint> {
        let best = self
            .grid
            .nearest(p, &self.vertices, &self.edges)
            .ok_or_else(|| Error::InvalidStreetReference("street system has no edges".into()))?;
        let e = EdgeId(best.edge);
        let len = self.edge(e).length;
        let offset = (best.t * len).clamp(0.0, len);
        Ok(StreetPoint { edge: e, offset, coords: self.point_on_edge(e, offset) })
    }

    /// Shortest street path between two street points. Convenience wrapper
    /// that builds a fresh [`PathFinder`]; loops issuing many queries
    /// should hold one and call [`PathFinder::shortest_path`].
    pub fn shortest_path(&self, from: &StreetPoint, to: &StreetPoint) -> Result<StreetPath> {
        self.path_finder().shortest_path(self, from, to)
    }

    /// Scratch-buffer handle for repeated path queries on this system.
    pub fn path_finder(&self) -> PathFinder {
        PathFinder::new(self.vertices.len())
    }

    /// Edge-length statistics over interior edges plus the window-level
    /// length intensity (which uses every edge, clipped included).
    pub fn edge_length_statistics(&self) -> EdgeLengthStats {
        let interior = self.interior_lengths();
        let (mean, variance) = crate::stats::mean_var(&interior);
        let total_length = self.total_length();
        EdgeLengthStats {
            mean,
            variance,
            histogram: Histogram::from_samples(&interior),
            interior_count: interior.len(),
            clipped_count: self.edges.len() - interior.len(),
            total_length,
            length_intensity: total_length / (self.window * self.window),
            reliable: interior.len() >= RELIABLE_INTERIOR_MIN,
        }
    }

    /// Serialise to the plain-text map format.
    pub fn to_text(&self) -> String {
        io::to_text(self)
    }

    /// Parse a plain-text map produced by [`StreetSystem::to_text`].
    pub fn from_text(text: &str) -> Result<StreetSystem> {
        io::from_text(text)
    }

    /// Write the text format to a file.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Load a text-format map from a file.
    pub fn load(path: &std::path::Path) -> Result<StreetSystem> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_text(&text)
    }
}

fn on_boundary(p: Point, window: f64) -> bool {
    p.x.abs() <= GEOM_TOL
        || (p.x - window).abs() <= GEOM_TOL
        || p.y.abs() <= GEOM_TOL
        || (p.y - window).abs() <= GEOM_TOL
}

fn label_components(n_vertices: usize, edges: &[Edge]) -> (Vec<u32>, Vec<f64>) {
    let mut parent: Vec<u32> = (0..n_vertices as u32).collect();
    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }
    for e in edges {
        let (ra, rb) = (find(&mut parent, e.a.0), find(&mut parent, e.b.0));
        if ra != rb {
            parent[rb as usize] = ra;
        }
    }
    // Dense labels in order of first appearance.
    let mut label = vec![u32::MAX; n_vertices];
    let mut lengths = Vec::new();
    for v in 0..n_vertices as u32 {
        let r = find(&mut parent, v) as usize;
        if label[r] == u32::MAX {
            label[r] = lengths.len() as u32;
            lengths.push(0.0);
        }
        label[v as usize] = label[r];
    }
    for e in edges {
        lengths[label[e.a.index()] as usize] += e.length;
    }
    (label, lengths)
}

/// Reusable A* scratch space. Paths are found over the street graph with
/// the two endpoints of each query edge acting as virtual sources and
/// targets; the Euclidean distance to the destination is the heuristic
/// (admissible because streets are straight).
///
/// Among equal-length routes the one with the lexicographically smallest
/// crossing-id sequence wins, which pins the result deterministically.
pub struct PathFinder {
    dist: Vec<f64>,
    /// (predecessor vertex, edge used); u32::MAX predecessor marks a seed.
    parent: Vec<(u32, u32)>,
    epoch: Vec<u32>,
    current_epoch: u32,
    heap: std::collections::BinaryHeap<HeapEntry>,
}

#[derive(PartialEq)]
struct HeapEntry {
    f: f64,
    v: u32,
    d: f64,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed: BinaryHeap is a max-heap, we want the smallest (f, v).
        other.f.total_cmp(&self.f).then_with(|| other.v.cmp(&self.v))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

const NO_VERTEX: u32 = u32::MAX;

impl PathFinder {
    fn new(n_vertices: usize) -> PathFinder {
        PathFinder {
            dist: vec![f64::INFINITY; n_vertices],
            parent: vec![(NO_VERTEX, NO_VERTEX); n_vertices],
            epoch: vec![0; n_vertices],
            current_epoch: 0,
            heap: std::collections::BinaryHeap::new(),
        }
    }

    fn touch(&mut self, v: u32) {
        if self.epoch[v as usize] != self.current_epoch {
            self.epoch[v as usize] = self.current_epoch;
            self.dist[v as usize] = f64::INFINITY;
            self.parent[v as usize] = (NO_VERTEX, NO_VERTEX);
        }
    }

    /// Vertex sequence from the seed to `v`, inclusive.
    fn chain(&self, mut v: u32) -> Vec<u32> {
        let mut out = vec![v];
        while self.parent[v as usize].0 != NO_VERTEX {
            v = self.parent[v as usize].0;
            out.push(v);
        }
        out.reverse();
        out
    }

    /// Is the path to `v` through `cand_parent` lexicographically smaller
    /// than the stored one? Only called on exact length ties.
    fn lex_improves(&self, v: u32, cand_parent: u32) -> bool {
        let stored = self.parent[v as usize].0;
        if stored == cand_parent {
            return false;
        }
        if stored == NO_VERTEX {
            // v is currently a seed (empty prefix): empty < anything.
            return false;
        }
        let mut a = self.chain(cand_parent);
        a.push(v);
        let mut b = self.chain(stored);
        b.push(v);
        a < b
    }

    /// Shortest street path from `from` to `to`.
    ///
    /// Within one edge the direct walk along the segment is always optimal,
    /// so that case (including `from == to`, which yields an empty path)
    /// never consults the graph.
    pub fn shortest_path(
        &mut self,
        sys: &StreetSystem,
        from: &StreetPoint,
        to: &StreetPoint,
    ) -> Result<StreetPath> {
        if from.edge.index() >= sys.n_edges() || to.edge.index() >= sys.n_edges() {
            return Err(Error::InvalidStreetReference("street point on missing edge".into()));
        }
        debug_assert_eq!(self.dist.len(), sys.n_vertices(), "path finder from another system");
        if from.edge == to.edge {
            if from.offset == to.offset {
                return Ok(StreetPath { segments: Vec::new(), length: 0.0 });
            }
            let seg = PathSegment { edge: from.edge, from: from.offset, to: to.offset };
            return Ok(StreetPath { segments: vec![seg], length: seg.len() });
        }
        if sys.component_of(from.edge) != sys.component_of(to.edge) {
            return Err(Error::NoRoute);
        }

        self.current_epoch = self.current_epoch.wrapping_add(1);
        self.heap.clear();
        let goal = to.coords;
        let e_from = sys.edge(from.edge);
        let e_to = sys.edge(to.edge);

        // Seed both endpoints of the source edge with the partial-edge cost.
        for (seed, d0) in
            [(e_from.a.0, from.offset), (e_from.b.0, e_from.length - from.offset)]
        {
            self.touch(seed);
            if d0 < self.dist[seed as usize] {
                self.dist[seed as usize] = d0;
                self.parent[seed as usize] = (NO_VERTEX, NO_VERTEX);
                let h = sys.vertex(VertexId(seed)).dist(goal);
                self.heap.push(HeapEntry { f: d0 + h, v: seed, d: d0 });
            }
        }

        // Exit costs from the two target-edge endpoints to `to` itself.
        let exits = [(e_to.a.0, to.offset), (e_to.b.0, e_to.length - to.offset)];
        let total_via = |pf: &PathFinder, t: u32| -> Option<f64> {
            exits.iter().find(|(v, _)| *v == t).and_then(|(v, tail)| {
                let v = *v as usize;
                (pf.epoch[v] == pf.current_epoch && pf.dist[v].is_finite())
                    .then(|| pf.dist[v] + tail)
            })
        };

        let mut best_total = f64::INFINITY;
        while let Some(HeapEntry { f, v, d }) = self.heap.pop() {
            if f > best_total {
                break;
            }
            if d > self.dist[v as usize] {
                continue; // stale
            }
            if let Some(t) = total_via(self, v) {
                best_total = best_total.min(t);
            }
            for &eid in sys.incident_edges(VertexId(v)) {
                let edge = sys.edge(eid);
                let w = if edge.a.0 == v { edge.b.0 } else { edge.a.0 };
                let nd = d + edge.length;
                self.touch(w);
                let improves = if nd < self.dist[w as usize] {
                    true
                } else if nd == self.dist[w as usize] {
                    self.lex_improves(w, v)
                } else {
                    false
                };
                if improves {
                    self.dist[w as usize] = nd;
                    self.parent[w as usize] = (v, eid.0);
                    let h = sys.vertex(VertexId(w)).dist(goal);
                    self.heap.push(HeapEntry { f: nd + h, v: w, d: nd });
                }
            }
        }

        // Pick the better of the two target endpoints; on exact ties,
        // compare the full crossing sequences.
        let mut chosen: Option<(f64, u32, f64)> = None; // (total, endpoint, tail)
        for &(t, tail) in &exits {
            let Some(total) = total_via(self, t) else { continue };
            let better = match &chosen {
                None => true,
                Some((ct, cv, _)) => {
                    total < *ct || (total == *ct && (self.chain(t) < self.chain(*cv)))
                }
            };
            if better {
                chosen = Some((total, t, tail));
            }
        }
        let Some((total, target, _tail)) = chosen else {
            return Err(Error::NoRoute);
        };

        // Reconstruct: partial source leg, full edges, partial target leg.
        let verts = self.chain(target);
        let mut segments = Vec::with_capacity(verts.len() + 1);
        let first = verts[0];
        let src_to = if e_from.a.0 == first { 0.0 } else { e_from.length };
        let src = PathSegment { edge: from.edge, from: from.offset, to: src_to };
        if !src.is_empty() {
            segments.push(src);
        }
        for w in verts.windows(2) {
            let eid = EdgeId(self.parent[w[1] as usize].1);
            let edge = sys.edge(eid);
            let (f0, t0) =
                if edge.a.0 == w[0] { (0.0, edge.length) } else { (edge.length, 0.0) };
            segments.push(PathSegment { edge: eid, from: f0, to: t0 });
        }
        let dst_from = if e_to.a.0 == target { 0.0 } else { e_to.length };
        let dst = PathSegment { edge: to.edge, from: dst_from, to: to.offset };
        if !dst.is_empty() {
            segments.push(dst);
        }
        Ok(StreetPath { segments, length: total })
    }
}

#[cfg(test)]
mod tests;
