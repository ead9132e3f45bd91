use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{shoelace, is_simple, PolygonalMesh, Rectangle, Vertex};
use crate::error::{Error, Result};

const MAX_DISTORTION_ATTEMPTS: usize = 5;

fn grid_vertices(n: usize, domain: &Rectangle) -> Vec<Vertex> {
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        // exact endpoints so boundary vertices sit on the rectangle
        let y = if j == n {
            domain.y_max
        } else {
            domain.y_min + domain.height() * j as f64 / n as f64
        };
        for i in 0..=n {
            let x = if i == n {
                domain.x_max
            } else {
                domain.x_min + domain.width() * i as f64 / n as f64
            };
            vertices.push(Vertex::new(x, y));
        }
    }
    vertices
}

fn grid_cells(n: usize) -> Vec<Vec<usize>> {
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut cells = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            cells.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    cells
}

/// Structured `n x n` grid of congruent rectangles.
pub fn generate_square_mesh(n: usize, domain: Rectangle) -> Result<PolygonalMesh> {
    if n == 0 {
        return Err(Error::MeshGeneration("need at least one subdivision".into()));
    }
    let domain = Rectangle::new(domain.x_min, domain.y_min, domain.x_max, domain.y_max)?;
    PolygonalMesh::new(domain, grid_vertices(n, &domain), grid_cells(n))
}

/// Grid whose interior vertices are moved by independent uniform offsets of at
/// most `amplitude / n` of the side length in each coordinate.
///
/// A draw that tangles a cell is discarded and retried with half the amplitude.
pub fn generate_distorted_quad_mesh(
    n: usize,
    domain: Rectangle,
    amplitude: f64,
    seed: u64,
) -> Result<PolygonalMesh> {
    if !(0.0..0.3).contains(&amplitude) {
        return Err(Error::MeshGeneration(format!(
            "distortion amplitude {amplitude} outside [0, 0.3)"
        )));
    }
    if n == 0 {
        return Err(Error::MeshGeneration("need at least one subdivision".into()));
    }
    let domain = Rectangle::new(domain.x_min, domain.y_min, domain.x_max, domain.y_max)?;
    let base = grid_vertices(n, &domain);
    let cells = grid_cells(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut amp = amplitude;
    for _ in 0..MAX_DISTORTION_ATTEMPTS {
        let (dx, dy) = (amp * domain.width() / n as f64, amp * domain.height() / n as f64);
        let mut vertices = base.clone();
        for j in 1..n {
            for i in 1..n {
                let v = &mut vertices[j * (n + 1) + i];
                v.x += dx * rng.gen_range(-1.0..=1.0);
                v.y += dy * rng.gen_range(-1.0..=1.0);
            }
        }
        let tangled = cells.iter().any(|c| {
            let pts: Vec<[f64; 2]> = c.iter().map(|&k| vertices[k].coords()).collect();
            !(shoelace(&pts) > 0.0) || !is_simple(&pts)
        });
        if !tangled {
            return PolygonalMesh::new(domain, vertices, cells);
        }
        amp *= 0.5;
    }
    Err(Error::MeshGeneration(format!(
        "distortion tangled cells in {MAX_DISTORTION_ATTEMPTS} attempts"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_cell_unit_square() {
        let m = generate_square_mesh(1, Rectangle::unit_square()).unwrap();
        assert_eq!(m.num_cells(), 1);
        assert!((m.cells()[0].area - 1.0).abs() < 1e-15);
        assert!((m.h() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn eight_by_eight_tiles() {
        let m = generate_square_mesh(8, Rectangle::unit_square()).unwrap();
        assert_eq!(m.num_cells(), 64);
        assert!((m.total_area() - 1.0).abs() < 1e-12);
        assert!((m.h() - 2f64.sqrt() / 8.0).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_edge_counts() {
        // 12 edges on a 2x2 grid: 4 interior (the cross), 8 on the boundary
        let m = generate_square_mesh(2, Rectangle::unit_square()).unwrap();
        assert_eq!(m.num_interior_edges(), 4);
        assert_eq!(m.num_boundary_edges(), 8);
        for e in m.edges().iter().filter(|e| !e.boundary) {
            assert_ne!(e.cells[0], e.cells[1]);
        }
    }

    #[test]
    fn rectangle_domain() {
        let d = Rectangle::new(-1.0, 2.0, 3.0, 4.0).unwrap();
        let m = generate_square_mesh(4, d).unwrap();
        assert!((m.total_area() - 8.0).abs() < 1e-12);
        assert!(generate_square_mesh(0, d).is_err());
        let bad = Rectangle { x_min: 0.0, y_min: 0.0, x_max: 0.0, y_max: 1.0 };
        assert!(matches!(generate_square_mesh(2, bad), Err(Error::InvalidDomain(_))));
    }

    #[test]
    fn zero_amplitude_is_structured() {
        let a = generate_distorted_quad_mesh(6, Rectangle::unit_square(), 0.0, 3).unwrap();
        let b = generate_square_mesh(6, Rectangle::unit_square()).unwrap();
        assert_eq!(a.vertices(), b.vertices());
        assert_eq!(a.cells(), b.cells());
    }

    #[test]
    fn distorted_cells_valid_and_boundary_fixed() {
        let m = generate_distorted_quad_mesh(16, Rectangle::unit_square(), 0.2, 11).unwrap();
        assert!(m.cells().iter().all(|c| c.area > 0.0));
        let g = generate_square_mesh(16, Rectangle::unit_square()).unwrap();
        for (k, (v, w)) in m.vertices().iter().zip(g.vertices()).enumerate() {
            let (i, j) = (k % 17, k / 17);
            if i == 0 || j == 0 || i == 16 || j == 16 {
                assert_eq!(v, w);
            } else {
                assert!((v.x - w.x).abs() <= 0.2 / 16.0 + 1e-15);
                assert!((v.y - w.y).abs() <= 0.2 / 16.0 + 1e-15);
            }
        }
    }

    #[test]
    fn distorted_is_deterministic() {
        let a = generate_distorted_quad_mesh(8, Rectangle::unit_square(), 0.25, 42).unwrap();
        let b = generate_distorted_quad_mesh(8, Rectangle::unit_square(), 0.25, 42).unwrap();
        assert_eq!(a.vertices(), b.vertices());
        let c = generate_distorted_quad_mesh(8, Rectangle::unit_square(), 0.25, 43).unwrap();
        assert_ne!(a.vertices(), c.vertices());
    }

    #[test]
    fn amplitude_out_of_range() {
        assert!(generate_distorted_quad_mesh(4, Rectangle::unit_square(), 0.3, 0).is_err());
        assert!(generate_distorted_quad_mesh(4, Rectangle::unit_square(), -0.1, 0).is_err());
    }
}
