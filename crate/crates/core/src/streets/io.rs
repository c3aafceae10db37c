//! Plain-text map format.
//!
//! ```text
//! streets-v1
//! lambda 50
//! window 10
//! seed 42
//! counts <n_vertices> <n_edges>
//! V <id> <x> <y>
//! ...
//! E <id> <a> <b> <length>
//! ...
//! ```
//!
//! Floats are written with Rust's shortest-round-trip formatting, so a
//! save/load cycle reproduces coordinates bit for bit and re-serialising
//! yields byte-identical files.

use std::fmt::Write as _;

use super::StreetSystem;
use crate::geometry::{Point, GEOM_TOL};
use crate::{Error, Result};

const MAGIC: &str = "streets-v1";

pub(super) fn to_text(sys: &StreetSystem) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "lambda {}", sys.intensity()).unwrap();
    writeln!(out, "window {}", sys.window()).unwrap();
    writeln!(out, "seed {}", sys.seed()).unwrap();
    writeln!(out, "counts {} {}", sys.n_vertices(), sys.n_edges()).unwrap();
    for v in 0..sys.n_vertices() {
        let p = sys.vertex(super::VertexId(v as u32));
        writeln!(out, "V {v} {} {}", p.x, p.y).unwrap();
    }
    for (id, e) in sys.edges() {
        writeln!(out, "E {id} {} {} {}", e.a, e.b, e.length).unwrap();
    }
    out
}

pub(super) fn from_text(text: &str) -> Result<StreetSystem> {
    let bad = |line: usize, msg: &str| Error::MapFormat(format!("line {}: {msg}", line + 1));
    let mut lines = text.lines().enumerate();
    let mut header = |key: &str| -> Result<String> {
        let (i, line) = lines
            .next()
            .ok_or_else(|| Error::MapFormat(format!("missing {key} line")))?;
        if key == MAGIC {
            return if line.trim() == MAGIC {
                Ok(String::new())
            } else {
                Err(bad(i, "not a streets-v1 map"))
            };
        }
        let rest = line
            .strip_prefix(key)
            .ok_or_else(|| bad(i, &format!("expected `{key} ...`")))?;
        Ok(rest.trim().to_string())
    };

    header(MAGIC)?;
    let lambda: f64 =
        header("lambda")?.parse().map_err(|_| Error::MapFormat("bad lambda".into()))?;
    let window: f64 =
        header("window")?.parse().map_err(|_| Error::MapFormat("bad window".into()))?;
    let seed: u64 = header("seed")?.parse().map_err(|_| Error::MapFormat("bad seed".into()))?;
    let counts = header("counts")?;
    let mut it = counts.split_whitespace();
    let nv: usize = it
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MapFormat("bad vertex count".into()))?;
    let ne: usize = it
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MapFormat("bad edge count".into()))?;

    let mut vertices = Vec::with_capacity(nv);
    let mut pairs = Vec::with_capacity(ne);
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut f = line.split_whitespace();
        match f.next() {
            Some("V") => {
                let id: usize = parse_field(&mut f, i, "vertex id")?;
                if id != vertices.len() {
                    return Err(bad(i, "vertex ids must be sequential from 0"));
                }
                let x: f64 = parse_field(&mut f, i, "x")?;
                let y: f64 = parse_field(&mut f, i, "y")?;
                vertices.push(Point::new(x, y));
            }
            Some("E") => {
                let id: usize = parse_field(&mut f, i, "edge id")?;
                if id != pairs.len() {
                    return Err(bad(i, "edge ids must be sequential from 0"));
                }
                let a: u32 = parse_field(&mut f, i, "endpoint a")?;
                let b: u32 = parse_field(&mut f, i, "endpoint b")?;
                let length: f64 = parse_field(&mut f, i, "length")?;
                let (pa, pb) = (
                    *vertices
                        .get(a as usize)
                        .ok_or_else(|| bad(i, "edge references missing vertex"))?,
                    *vertices
                        .get(b as usize)
                        .ok_or_else(|| bad(i, "edge references missing vertex"))?,
                );
                if (pa.dist(pb) - length).abs() > GEOM_TOL {
                    return Err(bad(i, "stored length disagrees with endpoint distance"));
                }
                pairs.push((a, b));
            }
            Some(other) => return Err(bad(i, &format!("unknown record `{other}`"))),
            None => {}
        }
    }
    if vertices.len() != nv || pairs.len() != ne {
        return Err(Error::MapFormat(format!(
            "counts promise {nv} vertices / {ne} edges, found {} / {}",
            vertices.len(),
            pairs.len()
        )));
    }
    StreetSystem::from_parts(window, lambda, seed, vertices, pairs)
}

fn parse_field<T: std::str::FromStr>(
    f: &mut std::str::SplitWhitespace<'_>,
    line: usize,
    what: &str,
) -> Result<T> {
    f.next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::MapFormat(format!("line {}: bad {what}", line + 1)))
}
