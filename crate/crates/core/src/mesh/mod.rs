//! Polygonal meshes of axis-aligned rectangles.
//!
//! A [`PolygonalMesh`] is immutable once built. Construction goes through
//! [`PolygonalMesh::new`], which checks every topological and geometric
//! invariant the solver relies on: counter-clockwise simple cells, matching
//! edge twins, boundary edges lying on the rectangle, exact tiling of the
//! domain and the planar Euler relation.

mod generate;
mod io;
mod quality;
mod spec;
mod voronoi;

use std::collections::HashMap;

use crate::error::{Error, Result};

pub use generate::{generate_distorted_quad_mesh, generate_square_mesh};
pub use io::{read_polymesh, write_polymesh, parse_polymesh, format_polymesh};
pub use quality::{check_mesh_assumptions, kernel_chebyshev_center, CellQuality, MeshQualityReport};
pub use spec::{MeshFamily, MeshSpec};
pub use voronoi::{generate_voronoi_mesh, voronoi_mesh_from_seeds, VoronoiOptions};

const TILING_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rectangle {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rectangle {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let finite = [x_min, y_min, x_max, y_max].iter().all(|c| c.is_finite());
        if !finite || !(x_max > x_min) || !(y_max > y_min) {
            return Err(Error::InvalidDomain(format!(
                "[{x_min}, {x_max}] x [{y_min}, {y_max}] is degenerate"
            )));
        }
        Ok(Rectangle {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn unit_square() -> Self {
        Rectangle {
            x_min: 0.0,
            y_min: 0.0,
            x_max: 1.0,
            y_max: 1.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        p[0] >= self.x_min - tol
            && p[0] <= self.x_max + tol
            && p[1] >= self.y_min - tol
            && p[1] <= self.y_max + tol
    }

    /// Whether the segment `a -> b` lies on one of the four sides.
    fn segment_on_boundary(&self, a: [f64; 2], b: [f64; 2], tol: f64) -> bool {
        let on = |p: [f64; 2], side: usize| match side {
            0 => (p[1] - self.y_min).abs() <= tol,
            1 => (p[0] - self.x_max).abs() <= tol,
            2 => (p[1] - self.y_max).abs() <= tol,
            _ => (p[0] - self.x_min).abs() <= tol,
        };
        (0..4).any(|s| on(a, s) && on(b, s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub x: f64,
    pub y: f64,
}

impl Vertex {
    pub fn new(x: f64, y: f64) -> Self {
        Vertex { x, y }
    }

    pub fn coords(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// Local edge of a cell, running from local vertex `i` to `i + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellEdge {
    /// Global edge id.
    pub edge: usize,
    pub length: f64,
    /// Outward unit normal.
    pub normal: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Counter-clockwise global vertex ids.
    pub vertex_ids: Vec<usize>,
    pub area: f64,
    pub centroid: [f64; 2],
    pub diameter: f64,
    pub edges: Vec<CellEdge>,
}

impl Cell {
    pub fn num_vertices(&self) -> usize {
        self.vertex_ids.len()
    }
}

/// Undirected mesh edge. `cells[0]` sees the edge as `vertices[0] -> vertices[1]`
/// in its counter-clockwise traversal; `cells[1]` is the twin, absent on the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub vertices: [usize; 2],
    pub cells: [usize; 2],
    pub boundary: bool,
}

#[derive(Debug, Clone)]
pub struct PolygonalMesh {
    domain: Rectangle,
    vertices: Vec<Vertex>,
    cells: Vec<Cell>,
    edges: Vec<Edge>,
    h: f64,
}

pub fn shoelace(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    let mut twice = 0.0;
    for i in 0..n {
        let p = points[i];
        let q = points[(i + 1) % n];
        twice += p[0] * q[1] - q[0] * p[1];
    }
    0.5 * twice
}

pub fn polygon_centroid(points: &[[f64; 2]], area: f64) -> [f64; 2] {
    // shift to the first vertex to limit cancellation
    let o = points[0];
    let n = points.len();
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let p = [points[i][0] - o[0], points[i][1] - o[1]];
        let q = [points[(i + 1) % n][0] - o[0], points[(i + 1) % n][1] - o[1]];
        let cross = p[0] * q[1] - q[0] * p[1];
        cx += (p[0] + q[0]) * cross;
        cy += (p[1] + q[1]) * cross;
    }
    [o[0] + cx / (6.0 * area), o[1] + cy / (6.0 * area)]
}

fn diameter(points: &[[f64; 2]]) -> f64 {
    let mut d2: f64 = 0.0;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            d2 = d2.max((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2));
        }
    }
    d2.sqrt()
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on_segment = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
        r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
    };
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// Simple-polygon test: no two non-adjacent edges meet.
pub(crate) fn is_simple(points: &[[f64; 2]]) -> bool {
    let n = points.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_intersect(points[i], points[(i + 1) % n], points[j], points[(j + 1) % n]) {
                return false;
            }
        }
    }
    // adjacent edges folding back onto each other
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        let c = points[(i + 2) % n];
        if orient(a, b, c) == 0.0 {
            let ab = [b[0] - a[0], b[1] - a[1]];
            let bc = [c[0] - b[0], c[1] - b[1]];
            if ab[0] * bc[0] + ab[1] * bc[1] < 0.0 {
                return false;
            }
        }
    }
    true
}

impl PolygonalMesh {
    /// Builds and validates a mesh. Cells must list their vertices counter-clockwise.
    pub fn new(domain: Rectangle, vertices: Vec<Vertex>, cell_vertices: Vec<Vec<usize>>) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidMesh(msg));
        if cell_vertices.is_empty() {
            return invalid("mesh has no cells".into());
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v.x.is_finite() || !v.y.is_finite() {
                return invalid(format!("vertex {i} has non-finite coordinates"));
            }
            if !domain.contains(v.coords(), 1e-12 * domain.width().max(domain.height())) {
                return invalid(format!("vertex {i} lies outside the domain"));
            }
        }
        let scale = domain.width().max(domain.height());
        let mut used = vec![false; vertices.len()];
        let mut cells = Vec::with_capacity(cell_vertices.len());
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for (c, ids) in cell_vertices.into_iter().enumerate() {
            if ids.len() < 3 {
                return invalid(format!("cell {c} has fewer than 3 vertices"));
            }
            for (k, &id) in ids.iter().enumerate() {
                if id >= vertices.len() {
                    return invalid(format!("cell {c} references missing vertex {id}"));
                }
                if ids[..k].contains(&id) {
                    return invalid(format!("cell {c} repeats vertex {id}"));
                }
                used[id] = true;
            }
            let points: Vec<[f64; 2]> = ids.iter().map(|&i| vertices[i].coords()).collect();
            let area = shoelace(&points);
            if !(area > 0.0) {
                return invalid(format!("cell {c} is not counter-clockwise or has zero area"));
            }
            if !is_simple(&points) {
                return invalid(format!("cell {c} is not a simple polygon"));
            }
            for k in 0..ids.len() {
                let key = (ids[k], ids[(k + 1) % ids.len()]);
                if directed.insert(key, c).is_some() {
                    return invalid(format!(
                        "directed edge {} -> {} appears twice (inconsistent orientation)",
                        key.0, key.1
                    ));
                }
            }
            cells.push(Cell {
                centroid: polygon_centroid(&points, area),
                diameter: diameter(&points),
                area,
                edges: Vec::with_capacity(ids.len()),
                vertex_ids: ids,
            });
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return invalid(format!("vertex {i} is not used by any cell"));
        }

        let mut edges: Vec<Edge> = Vec::new();
        let mut edge_of: HashMap<(usize, usize), usize> = HashMap::new();
        for c in 0..cells.len() {
            let n = cells[c].vertex_ids.len();
            for k in 0..n {
                let a = cells[c].vertex_ids[k];
                let b = cells[c].vertex_ids[(k + 1) % n];
                let pa = vertices[a].coords();
                let pb = vertices[b].coords();
                let id = if let Some(&e) = edge_of.get(&(b, a)) {
                    edges[e].cells[1] = c;
                    edges[e].boundary = false;
                    e
                } else {
                    let e = edges.len();
                    let boundary = !directed.contains_key(&(b, a));
                    if boundary && !domain.segment_on_boundary(pa, pb, 1e-12 * scale) {
                        return invalid(format!(
                            "edge {a} -> {b} of cell {c} has no twin but is not on the domain boundary"
                        ));
                    }
                    edges.push(Edge {
                        vertices: [a, b],
                        cells: [c, usize::MAX],
                        boundary,
                    });
                    edge_of.insert((a, b), e);
                    e
                };
                let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
                let length = dx.hypot(dy);
                if !(length > 0.0) {
                    return invalid(format!("cell {c} has a zero-length edge"));
                }
                cells[c].edges.push(CellEdge {
                    edge: id,
                    length,
                    normal: [dy / length, -dx / length],
                });
            }
        }

        let total: f64 = cells.iter().map(|c| c.area).sum();
        if ((total - domain.area()) / domain.area()).abs() > TILING_TOL {
            return invalid(format!(
                "cell areas sum to {total}, domain area is {}",
                domain.area()
            ));
        }
        let euler = vertices.len() as i64 - edges.len() as i64 + cells.len() as i64;
        if euler != 1 {
            return invalid(format!("Euler characteristic V - E + F = {euler}, expected 1"));
        }
        let h = cells.iter().map(|c| c.diameter).fold(0.0, f64::max);
        Ok(PolygonalMesh {
            domain,
            vertices,
            cells,
            edges,
            h,
        })
    }

    pub fn domain(&self) -> Rectangle {
        self.domain
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_boundary_edges(&self) -> usize {
        self.edges.iter().filter(|e| e.boundary).count()
    }

    pub fn num_interior_edges(&self) -> usize {
        self.edges.len() - self.num_boundary_edges()
    }

    /// Global mesh size, the largest cell diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn cell_points(&self, c: usize) -> Vec<[f64; 2]> {
        self.cells[c]
            .vertex_ids
            .iter()
            .map(|&i| self.vertices[i].coords())
            .collect()
    }

    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(|c| c.area).sum()
    }

    /// SHA-256 over the exact bit patterns of the mesh data, hex-encoded.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for v in &self.vertices {
            hasher.update(v.x.to_bits().to_le_bytes());
            hasher.update(v.y.to_bits().to_le_bytes());
        }
        for c in &self.cells {
            hasher.update((c.vertex_ids.len() as u64).to_le_bytes());
            for &i in &c.vertex_ids {
                hasher.update((i as u64).to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square_mesh() -> PolygonalMesh {
        let v = vec![
            Vertex::new(0.0, 0.0),
            Vertex::new(1.0, 0.0),
            Vertex::new(1.0, 1.0),
            Vertex::new(0.0, 1.0),
        ];
        PolygonalMesh::new(Rectangle::unit_square(), v, vec![vec![0, 1, 2, 3]]).unwrap()
    }

    #[test]
    fn single_square_geometry() {
        let m = unit_square_mesh();
        let c = &m.cells()[0];
        assert!((c.area - 1.0).abs() < 1e-15);
        assert!((c.diameter - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.centroid, [0.5, 0.5]);
        assert_eq!(c.edges[0].normal, [0.0, -1.0]);
        assert_eq!(c.edges[1].normal, [1.0, 0.0]);
        assert_eq!(m.num_boundary_edges(), 4);
    }

    #[test]
    fn clockwise_cell_rejected() {
        let v = vec![
            Vertex::new(0.0, 0.0),
            Vertex::new(1.0, 0.0),
            Vertex::new(1.0, 1.0),
            Vertex::new(0.0, 1.0),
        ];
        let err = PolygonalMesh::new(Rectangle::unit_square(), v, vec![vec![0, 3, 2, 1]]).unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)));
    }

    #[test]
    fn simplicity_test() {
        let bowtie = [[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(!is_simple(&bowtie));
        let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(is_simple(&square));
        // hanging vertex on a straight side is allowed
        let pent = [[0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(is_simple(&pent));
    }

    #[test]
    fn gap_in_tiling_rejected() {
        let v = vec![
            Vertex::new(0.0, 0.0),
            Vertex::new(1.0, 0.0),
            Vertex::new(0.0, 1.0),
        ];
        let err = PolygonalMesh::new(Rectangle::unit_square(), v, vec![vec![0, 1, 2]]).unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)));
    }

    #[test]
    fn unused_vertex_rejected() {
        let v = vec![
            Vertex::new(0.0, 0.0),
            Vertex::new(1.0, 0.0),
            Vertex::new(1.0, 1.0),
            Vertex::new(0.0, 1.0),
            Vertex::new(0.5, 0.5),
        ];
        assert!(PolygonalMesh::new(Rectangle::unit_square(), v, vec![vec![0, 1, 2, 3]]).is_err());
    }

    #[test]
    fn degenerate_rectangle() {
        assert!(matches!(
            Rectangle::new(0.0, 0.0, 0.0, 1.0),
            Err(Error::InvalidDomain(_))
        ));
        assert!(Rectangle::new(0.0, 0.0, f64::NAN, 1.0).is_err());
    }
}
