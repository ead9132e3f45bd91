use super::PolygonalMesh;

#[derive(Debug, Clone, PartialEq)]
pub struct CellQuality {
    /// Shortest edge over cell diameter.
    pub edge_ratio: f64,
    /// Radius of the largest disc inside the polygon's kernel, over the cell diameter.
    pub kernel_radius_ratio: f64,
    /// Centre of that disc.
    pub kernel_center: [f64; 2],
    /// Every boundary edge is visible from the kernel centre.
    pub star_shaped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshQualityReport {
    pub c_t: f64,
    pub min_edge_ratio: f64,
    pub min_kernel_radius_ratio: f64,
    pub cells: Vec<CellQuality>,
    /// Every cell has edge ratio above `c_t` and is star-shaped with respect
    /// to a disc of radius `c_t * h_K`.
    pub passes: bool,
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-14 {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, o) in out.iter_mut().enumerate() {
        let mut m = a;
        for row in 0..3 {
            m[row][col] = b[row];
        }
        *o = det(m) / d;
    }
    Some(out)
}

/// Chebyshev centre of the kernel of a counter-clockwise polygon: the point
/// maximising the smallest signed distance to the edge lines, and that distance.
///
/// The kernel is the intersection of the inner half-planes of all edges, so a
/// positive radius means the polygon is star-shaped with respect to every
/// point of the returned disc.
pub fn kernel_chebyshev_center(points: &[[f64; 2]]) -> ([f64; 2], f64) {
    let n = points.len();
    // outward unit normal n_e and offset n_e . p_e for each edge line
    let lines: Vec<([f64; 2], f64)> = (0..n)
        .filter_map(|i| {
            let p = points[i];
            let q = points[(i + 1) % n];
            let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
            let len = dx.hypot(dy);
            (len > 0.0).then(|| {
                let nrm = [dy / len, -dx / len];
                (nrm, nrm[0] * p[0] + nrm[1] * p[1])
            })
        })
        .collect();
    let scale = points
        .iter()
        .flat_map(|p| p.iter())
        .fold(1.0f64, |m, c| m.max(c.abs()));
    let mut best = ([f64::NAN; 2], f64::NEG_INFINITY);
    let m = lines.len();
    for i in 0..m {
        for j in i + 1..m {
            for k in j + 1..m {
                let rows = [lines[i], lines[j], lines[k]];
                let a = rows.map(|(nrm, _)| [nrm[0], nrm[1], 1.0]);
                let b = rows.map(|(_, c)| c);
                let Some([x, y, r]) = solve3(a, b) else { continue };
                if r <= best.1 {
                    continue;
                }
                let feasible = lines
                    .iter()
                    .all(|(nrm, c)| nrm[0] * x + nrm[1] * y + r <= c + 1e-12 * scale);
                if feasible {
                    best = ([x, y], r);
                }
            }
        }
    }
    best
}

/// Checks shortest-edge and star-shapedness regularity against `c_t`.
pub fn check_mesh_assumptions(mesh: &PolygonalMesh, c_t: f64) -> MeshQualityReport {
    let cells: Vec<CellQuality> = mesh
        .cells()
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            let shortest = cell.edges.iter().map(|e| e.length).fold(f64::INFINITY, f64::min);
            let points = mesh.cell_points(c);
            let (center, radius) = kernel_chebyshev_center(&points);
            let visible = radius > 0.0
                && cell.edges.iter().zip(&points).all(|(e, p)| {
                    e.normal[0] * (center[0] - p[0]) + e.normal[1] * (center[1] - p[1]) < 0.0
                });
            CellQuality {
                edge_ratio: shortest / cell.diameter,
                kernel_radius_ratio: radius / cell.diameter,
                kernel_center: center,
                star_shaped: visible,
            }
        })
        .collect();
    let min_edge_ratio = cells.iter().map(|q| q.edge_ratio).fold(f64::INFINITY, f64::min);
    let min_kernel_radius_ratio = cells
        .iter()
        .map(|q| q.kernel_radius_ratio)
        .fold(f64::INFINITY, f64::min);
    let passes = cells
        .iter()
        .all(|q| q.star_shaped && q.edge_ratio > c_t && q.kernel_radius_ratio >= c_t);
    MeshQualityReport {
        c_t,
        min_edge_ratio,
        min_kernel_radius_ratio,
        cells,
        passes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_distorted_quad_mesh, generate_square_mesh, PolygonalMesh, Rectangle, Vertex};

    #[test]
    fn square_cell_ratio() {
        let m = generate_square_mesh(1, Rectangle::unit_square()).unwrap();
        let r = check_mesh_assumptions(&m, 0.05);
        assert!((r.min_edge_ratio - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        // inscribed disc of the unit square
        assert!((r.cells[0].kernel_radius_ratio - 0.5 / 2f64.sqrt()).abs() < 1e-12);
        assert!((r.cells[0].kernel_center[0] - 0.5).abs() < 1e-12);
        assert!(r.passes);
    }

    #[test]
    fn regular_hexagon_ratio() {
        let pts: Vec<[f64; 2]> = (0..6)
            .map(|k| {
                let t = std::f64::consts::PI / 3.0 * k as f64;
                [t.cos(), t.sin()]
            })
            .collect();
        let (c, r) = kernel_chebyshev_center(&pts);
        assert!(c[0].abs() < 1e-12 && c[1].abs() < 1e-12);
        assert!((r - 3f64.sqrt() / 2.0).abs() < 1e-12);
        let side = 1.0;
        let diameter = 2.0;
        // the edge ratio of a regular hexagon is side / diameter
        let shortest = (0..6)
            .map(|i| {
                let (p, q) = (pts[i], pts[(i + 1) % 6]);
                (p[0] - q[0]).hypot(p[1] - q[1])
            })
            .fold(f64::INFINITY, f64::min);
        assert!((shortest / diameter - side / diameter).abs() < 1e-12);
        assert!((shortest / diameter - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sliver_triangle_fails() {
        // a 1 x 0.01 sliver split off a rectangle-shaped domain
        let d = Rectangle::new(0.0, 0.0, 1.0, 0.01).unwrap();
        let v = vec![
            Vertex::new(0.0, 0.0),
            Vertex::new(1.0, 0.0),
            Vertex::new(1.0, 0.01),
            Vertex::new(0.0, 0.01),
        ];
        let m = PolygonalMesh::new(d, v, vec![vec![0, 1, 2], vec![0, 2, 3]]).unwrap();
        let r = check_mesh_assumptions(&m, 0.05);
        assert!(r.min_edge_ratio < 0.05);
        assert!(!r.passes);
        // still star-shaped, only the edge ratio fails
        assert!(r.cells.iter().all(|c| c.star_shaped));
    }

    #[test]
    fn nonconvex_l_shape_is_star_shaped() {
        let pts = [[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]];
        let (c, r) = kernel_chebyshev_center(&pts);
        assert!(r > 0.0);
        assert!(c[0] < 1.0 && c[1] < 1.0);
    }

    #[test]
    fn non_star_shaped_detected() {
        // a comb with two deep teeth has an empty kernel
        let pts = [
            [0.0, 0.0], [3.0, 0.0], [3.0, 3.0], [2.0, 3.0], [2.0, 0.5],
            [1.0, 0.5], [1.0, 3.0], [0.0, 3.0],
        ];
        let (_, r) = kernel_chebyshev_center(&pts);
        assert!(r <= 0.0);
    }

    #[test]
    fn shipped_defaults_pass() {
        let sq = generate_square_mesh(16, Rectangle::unit_square()).unwrap();
        assert!(check_mesh_assumptions(&sq, 0.05).passes);
        let dq = generate_distorted_quad_mesh(16, Rectangle::unit_square(), 0.2, 5).unwrap();
        assert!(check_mesh_assumptions(&dq, 0.05).passes);
    }
}
