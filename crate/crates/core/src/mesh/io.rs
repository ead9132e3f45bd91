//! Plain-text `POLYMESH 1` mesh files.
//!
//! ```text
//! POLYMESH 1
//! <vertex count>
//! x y            (one line per vertex)
//! <cell count>
//! n id0 id1 ...  (one line per cell, counter-clockwise)
//! ```
//!
//! Coordinates are written in shortest round-trip form, so a write/read
//! cycle reproduces the vertex bits exactly. The domain is the bounding box
//! of the vertices.

use std::fmt::Write as _;
use std::path::Path;

use super::{PolygonalMesh, Rectangle, Vertex};
use crate::error::{Error, Result};

pub fn format_polymesh(mesh: &PolygonalMesh) -> String {
    let mut out = String::new();
    out.push_str("POLYMESH 1\n");
    let _ = writeln!(out, "{}", mesh.num_vertices());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{:?} {:?}", v.x, v.y);
    }
    let _ = writeln!(out, "{}", mesh.num_cells());
    for c in mesh.cells() {
        let _ = write!(out, "{}", c.vertex_ids.len());
        for id in &c.vertex_ids {
            let _ = write!(out, " {id}");
        }
        out.push('\n');
    }
    out
}

pub fn write_polymesh(mesh: &PolygonalMesh, path: &Path) -> Result<()> {
    std::fs::write(path, format_polymesh(mesh)).map_err(|e| Error::io(path, e))
}

pub fn read_polymesh(path: &Path) -> Result<PolygonalMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_polymesh(&text, &path.display().to_string())
}

/// Parses mesh text; `origin` names the source in error messages.
pub fn parse_polymesh(text: &str, origin: &str) -> Result<PolygonalMesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| err(0, format!("unexpected end of file, expected {what}")))
    };

    let (ln, header) = next("header")?;
    if header.split_whitespace().collect::<Vec<_>>() != ["POLYMESH", "1"] {
        return Err(err(ln, format!("expected `POLYMESH 1`, found `{header}`")));
    }
    let parse_count = |(ln, s): (usize, &str), what: &str| {
        s.parse::<usize>()
            .map_err(|_| err(ln, format!("expected {what}, found `{s}`")))
    };
    let nv = parse_count(next("vertex count")?, "vertex count")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = next("vertex line")?;
        let xy: Vec<&str> = l.split_whitespace().collect();
        if xy.len() != 2 {
            return Err(err(ln, format!("expected `x y`, found `{l}`")));
        }
        let x = xy[0].parse::<f64>().map_err(|e| err(ln, e.to_string()))?;
        let y = xy[1].parse::<f64>().map_err(|e| err(ln, e.to_string()))?;
        vertices.push(Vertex::new(x, y));
    }
    let nc = parse_count(next("cell count")?, "cell count")?;
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (ln, l) = next("cell line")?;
        let ids: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| err(ln, format!("bad index `{t}`"))))
            .collect::<Result<_>>()?;
        if ids.is_empty() || ids[0] + 1 != ids.len() {
            return Err(err(ln, format!("vertex count does not match the ids in `{l}`")));
        }
        cells.push(ids[1..].to_vec());
    }
    if let Some((ln, l)) = lines.next() {
        return Err(err(ln, format!("trailing content `{l}`")));
    }
    if vertices.is_empty() {
        return Err(err(0, "mesh has no vertices".into()));
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for v in &vertices {
        x0 = x0.min(v.x);
        y0 = y0.min(v.y);
        x1 = x1.max(v.x);
        y1 = y1.max(v.y);
    }
    let domain = Rectangle::new(x0, y0, x1, y1)?;
    PolygonalMesh::new(domain, vertices, cells)
}
