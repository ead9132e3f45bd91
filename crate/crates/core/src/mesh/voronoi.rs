//! Clipped Voronoi tessellations of a rectangle with Lloyd relaxation.
//!
//! Each cell is computed independently by clipping the rectangle against the
//! bisector half-planes of nearby seeds. Vertices shared between cells are
//! then merged by proximity, and edges that are very short relative to the
//! adjacent cells are collapsed so the result satisfies the edge-ratio
//! regularity assumption.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{is_simple, polygon_centroid, shoelace, PolygonalMesh, Rectangle, Vertex};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoronoiOptions {
    /// Edges shorter than this fraction of the smaller adjacent cell diameter are collapsed.
    pub collapse_ratio: f64,
    /// Vertices closer than this (relative to the domain size) are identified.
    pub merge_tol: f64,
}

impl Default for VoronoiOptions {
    fn default() -> Self {
        VoronoiOptions {
            collapse_ratio: 0.1,
            merge_tol: 1e-9,
        }
    }
}

const MAX_SEED_ATTEMPTS: usize = 5;

/// Uniform bucket grid over the domain for neighbour queries.
struct SeedGrid {
    nx: usize,
    ny: usize,
    cell_w: f64,
    cell_h: f64,
    domain: Rectangle,
    buckets: Vec<Vec<usize>>,
}

impl SeedGrid {
    fn new(seeds: &[[f64; 2]], domain: Rectangle) -> Self {
        let per_side = (seeds.len() as f64).sqrt().ceil().max(1.0) as usize;
        let (nx, ny) = (per_side, per_side);
        let cell_w = domain.width() / nx as f64;
        let cell_h = domain.height() / ny as f64;
        let mut grid = SeedGrid {
            nx,
            ny,
            cell_w,
            cell_h,
            domain,
            buckets: vec![Vec::new(); nx * ny],
        };
        for (i, s) in seeds.iter().enumerate() {
            let (bx, by) = grid.bucket_of(*s);
            grid.buckets[by * nx + bx].push(i);
        }
        grid
    }

    fn bucket_of(&self, p: [f64; 2]) -> (usize, usize) {
        let bx = ((p[0] - self.domain.x_min) / self.cell_w).floor() as isize;
        let by = ((p[1] - self.domain.y_min) / self.cell_h).floor() as isize;
        (
            bx.clamp(0, self.nx as isize - 1) as usize,
            by.clamp(0, self.ny as isize - 1) as usize,
        )
    }

    /// Visits the buckets at Chebyshev distance `ring` from `(bx, by)`.
    fn ring(&self, bx: usize, by: usize, ring: usize, mut f: impl FnMut(usize)) {
        let (bx, by, r) = (bx as isize, by as isize, ring as isize);
        for j in by - r..=by + r {
            for i in bx - r..=bx + r {
                if (i - bx).abs().max((j - by).abs()) != r {
                    continue;
                }
                if i < 0 || j < 0 || i >= self.nx as isize || j >= self.ny as isize {
                    continue;
                }
                for &s in &self.buckets[j as usize * self.nx + i as usize] {
                    f(s);
                }
            }
        }
    }
}

/// Keeps the part of `poly` where `normal . x <= offset`.
fn clip_half_plane(poly: &[[f64; 2]], normal: [f64; 2], offset: f64) -> Vec<[f64; 2]> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    let side = |p: [f64; 2]| normal[0] * p[0] + normal[1] * p[1] - offset;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let (sp, sq) = (side(p), side(q));
        if sp <= 0.0 {
            out.push(p);
        }
        if (sp < 0.0 && sq > 0.0) || (sp > 0.0 && sq < 0.0) {
            let t = sp / (sp - sq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

fn voronoi_cells(seeds: &[[f64; 2]], domain: Rectangle) -> Vec<Vec<[f64; 2]>> {
    let grid = SeedGrid::new(seeds, domain);
    let bucket_size = grid.cell_w.min(grid.cell_h);
    let max_ring = grid.nx.max(grid.ny);
    seeds
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut poly = vec![
                [domain.x_min, domain.y_min],
                [domain.x_max, domain.y_min],
                [domain.x_max, domain.y_max],
                [domain.x_min, domain.y_max],
            ];
            let (bx, by) = grid.bucket_of(s);
            for ring in 0..=max_ring {
                // every seed in this ring is at least (ring - 1) buckets away
                let reach = poly
                    .iter()
                    .map(|p| (p[0] - s[0]).hypot(p[1] - s[1]))
                    .fold(0.0, f64::max);
                if ring >= 2 && (ring - 1) as f64 * bucket_size > 2.0 * reach {
                    break;
                }
                grid.ring(bx, by, ring, |j| {
                    if j == i {
                        return;
                    }
                    let t = seeds[j];
                    let normal = [t[0] - s[0], t[1] - s[1]];
                    let mid = [0.5 * (s[0] + t[0]), 0.5 * (s[1] + t[1])];
                    let offset = normal[0] * mid[0] + normal[1] * mid[1];
                    poly = clip_half_plane(&poly, normal, offset);
                });
            }
            poly
        })
        .collect()
}

fn has_duplicates(seeds: &[[f64; 2]], tol: f64) -> bool {
    let mut sorted: Vec<[f64; 2]> = seeds.to_vec();
    sorted.sort_by(|a, b| a[0].total_cmp(&b[0]));
    for (i, a) in sorted.iter().enumerate() {
        for b in &sorted[i + 1..] {
            if b[0] - a[0] > tol {
                break;
            }
            if (a[1] - b[1]).abs() <= tol {
                return true;
            }
        }
    }
    false
}

/// Identifies vertices within `tol` of each other, returning unique points and
/// per-cell index lists with consecutive repeats removed.
fn merge_vertices(polys: &[Vec<[f64; 2]>], tol: f64) -> (Vec<[f64; 2]>, Vec<Vec<usize>>) {
    let key = |p: [f64; 2]| ((p[0] / tol).floor() as i64, (p[1] / tol).floor() as i64);
    let mut lookup: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut points: Vec<[f64; 2]> = Vec::new();
    let mut cells = Vec::with_capacity(polys.len());
    for poly in polys {
        let mut ids: Vec<usize> = Vec::with_capacity(poly.len());
        for &p in poly {
            let (kx, ky) = key(p);
            let mut found = None;
            'search: for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(cands) = lookup.get(&(kx + dx, ky + dy)) {
                        for &c in cands {
                            let q = points[c];
                            if (p[0] - q[0]).abs() <= tol && (p[1] - q[1]).abs() <= tol {
                                found = Some(c);
                                break 'search;
                            }
                        }
                    }
                }
            }
            let id = found.unwrap_or_else(|| {
                points.push(p);
                lookup.entry((kx, ky)).or_default().push(points.len() - 1);
                points.len() - 1
            });
            if ids.last() != Some(&id) {
                ids.push(id);
            }
        }
        while ids.len() > 1 && ids.first() == ids.last() {
            ids.pop();
        }
        cells.push(ids);
    }
    (points, cells)
}

#[derive(Clone, Copy, PartialEq)]
enum BoundaryKind {
    Interior,
    Side(u8),
    Corner,
}

fn boundary_kind(p: [f64; 2], domain: &Rectangle, tol: f64) -> BoundaryKind {
    let mut sides = 0u8;
    let mut count = 0;
    if (p[1] - domain.y_min).abs() <= tol {
        sides |= 1;
        count += 1;
    }
    if (p[0] - domain.x_max).abs() <= tol {
        sides |= 2;
        count += 1;
    }
    if (p[1] - domain.y_max).abs() <= tol {
        sides |= 4;
        count += 1;
    }
    if (p[0] - domain.x_min).abs() <= tol {
        sides |= 8;
        count += 1;
    }
    match count {
        0 => BoundaryKind::Interior,
        1 => BoundaryKind::Side(sides),
        _ => BoundaryKind::Corner,
    }
}

fn cell_ok(points: &[[f64; 2]], ids: &[usize]) -> bool {
    if ids.len() < 3 {
        return false;
    }
    let pts: Vec<[f64; 2]> = ids.iter().map(|&i| points[i]).collect();
    shoelace(&pts) > 0.0 && is_simple(&pts)
}

fn cell_diameter(points: &[[f64; 2]], ids: &[usize]) -> f64 {
    let mut d: f64 = 0.0;
    for (k, &a) in ids.iter().enumerate() {
        for &b in &ids[k + 1..] {
            d = d.max((points[a][0] - points[b][0]).hypot(points[a][1] - points[b][1]));
        }
    }
    d
}

/// Collapses short edges in place; each pass handles non-overlapping edges.
fn collapse_short_edges(
    points: &mut Vec<[f64; 2]>,
    cells: &mut [Vec<usize>],
    domain: &Rectangle,
    ratio: f64,
    tol: f64,
) {
    if ratio <= 0.0 {
        return;
    }
    loop {
        let mut vertex_cells: Vec<Vec<usize>> = vec![Vec::new(); points.len()];
        for (c, ids) in cells.iter().enumerate() {
            for &v in ids {
                vertex_cells[v].push(c);
            }
        }
        let diam: Vec<f64> = cells.iter().map(|ids| cell_diameter(points, ids)).collect();
        let mut short: Vec<(f64, usize, usize)> = Vec::new();
        let mut seen: HashMap<(usize, usize), ()> = HashMap::new();
        for (c, ids) in cells.iter().enumerate() {
            for k in 0..ids.len() {
                let (a, b) = (ids[k], ids[(k + 1) % ids.len()]);
                let key = (a.min(b), a.max(b));
                if seen.insert(key, ()).is_some() {
                    continue;
                }
                let len = (points[a][0] - points[b][0]).hypot(points[a][1] - points[b][1]);
                let hk = vertex_cells[a]
                    .iter()
                    .filter(|cc| vertex_cells[b].contains(cc))
                    .map(|&cc| diam[cc])
                    .fold(diam[c], f64::min);
                if len < ratio * hk {
                    short.push((len, key.0, key.1));
                }
            }
        }
        if short.is_empty() {
            return;
        }
        short.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut touched = vec![false; points.len()];
        let mut progress = false;
        for &(_, a, b) in &short {
            if touched[a] || touched[b] {
                continue;
            }
            let (ka, kb) = (boundary_kind(points[a], domain, tol), boundary_kind(points[b], domain, tol));
            let target = match (ka, kb) {
                (BoundaryKind::Corner, BoundaryKind::Corner) => continue,
                (BoundaryKind::Corner, _) => points[a],
                (_, BoundaryKind::Corner) => points[b],
                (BoundaryKind::Side(sa), BoundaryKind::Side(sb)) if sa != sb => continue,
                (BoundaryKind::Side(_), BoundaryKind::Interior) => points[a],
                (BoundaryKind::Interior, BoundaryKind::Side(_)) => points[b],
                _ => [0.5 * (points[a][0] + points[b][0]), 0.5 * (points[a][1] + points[b][1])],
            };
            let mut affected: Vec<usize> = vertex_cells[a].clone();
            for &c in &vertex_cells[b] {
                if !affected.contains(&c) {
                    affected.push(c);
                }
            }
            let mut trial_points = points.clone();
            trial_points[a] = target;
            let trial: Vec<(usize, Vec<usize>)> = affected
                .iter()
                .map(|&c| {
                    let mut ids: Vec<usize> = Vec::with_capacity(cells[c].len());
                    for &v in &cells[c] {
                        let v = if v == b { a } else { v };
                        if ids.last() != Some(&v) {
                            ids.push(v);
                        }
                    }
                    while ids.len() > 1 && ids.first() == ids.last() {
                        ids.pop();
                    }
                    (c, ids)
                })
                .collect();
            if trial.iter().all(|(_, ids)| cell_ok(&trial_points, ids)) {
                points[a] = target;
                for (c, ids) in trial {
                    cells[c] = ids;
                }
                touched[a] = true;
                touched[b] = true;
                // keep neighbours of the moved vertex out of this pass
                for &c in &affected {
                    for &v in &cells[c] {
                        touched[v] = true;
                    }
                }
                progress = true;
            }
        }
        if !progress {
            return;
        }
    }
}

/// Drops vertices no cell references and renumbers.
fn compact(points: Vec<[f64; 2]>, cells: Vec<Vec<usize>>) -> (Vec<Vertex>, Vec<Vec<usize>>) {
    let mut map = vec![usize::MAX; points.len()];
    let mut vertices = Vec::new();
    let cells = cells
        .into_iter()
        .map(|ids| {
            ids.into_iter()
                .map(|v| {
                    if map[v] == usize::MAX {
                        map[v] = vertices.len();
                        vertices.push(Vertex::new(points[v][0], points[v][1]));
                    }
                    map[v]
                })
                .collect()
        })
        .collect();
    (vertices, cells)
}

/// Clipped Voronoi mesh of the given seeds after `lloyd_iterations` centroidal sweeps.
pub fn voronoi_mesh_from_seeds(
    seeds: &[[f64; 2]],
    domain: Rectangle,
    lloyd_iterations: usize,
    options: VoronoiOptions,
) -> Result<PolygonalMesh> {
    let domain = Rectangle::new(domain.x_min, domain.y_min, domain.x_max, domain.y_max)?;
    if seeds.len() < 4 {
        return Err(Error::MeshGeneration(format!(
            "need at least 4 seeds, got {}",
            seeds.len()
        )));
    }
    let scale = domain.width().max(domain.height());
    let tol = options.merge_tol * scale;
    if seeds.iter().any(|s| !domain.contains(*s, 0.0)) {
        return Err(Error::MeshGeneration("seed outside the domain".into()));
    }
    if has_duplicates(seeds, tol) {
        return Err(Error::MeshGeneration("duplicate seeds".into()));
    }
    let mut seeds = seeds.to_vec();
    let mut polys = voronoi_cells(&seeds, domain);
    for _ in 0..lloyd_iterations {
        for (s, poly) in seeds.iter_mut().zip(&polys) {
            let area = shoelace(poly);
            if area > 0.0 {
                *s = polygon_centroid(poly, area);
            }
        }
        polys = voronoi_cells(&seeds, domain);
    }
    if polys.iter().any(|p| p.len() < 3 || !(shoelace(p) > 0.0)) {
        return Err(Error::MeshGeneration("empty Voronoi cell".into()));
    }
    let (mut points, mut cells) = merge_vertices(&polys, tol);
    collapse_short_edges(&mut points, &mut cells, &domain, options.collapse_ratio, tol);
    let (vertices, cells) = compact(points, cells);
    PolygonalMesh::new(domain, vertices, cells)
}

/// Voronoi mesh of `n_seeds` uniformly random seeds (deterministic in `seed`).
///
/// Coincident seeds are redrawn up to a fixed number of times.
pub fn generate_voronoi_mesh(
    n_seeds: usize,
    domain: Rectangle,
    lloyd_iterations: usize,
    seed: u64,
) -> Result<PolygonalMesh> {
    if n_seeds < 4 {
        return Err(Error::MeshGeneration(format!(
            "need at least 4 seeds, got {n_seeds}"
        )));
    }
    let domain = Rectangle::new(domain.x_min, domain.y_min, domain.x_max, domain.y_max)?;
    let options = VoronoiOptions::default();
    let tol = options.merge_tol * domain.width().max(domain.height());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seeds: Vec<[f64; 2]> = (0..n_seeds)
        .map(|_| {
            [
                rng.gen_range(domain.x_min..domain.x_max),
                rng.gen_range(domain.y_min..domain.y_max),
            ]
        })
        .collect();
    for _ in 0..MAX_SEED_ATTEMPTS {
        if !has_duplicates(&seeds, tol) {
            return voronoi_mesh_from_seeds(&seeds, domain, lloyd_iterations, options);
        }
        let jitter = 1e3 * tol;
        for s in seeds.iter_mut() {
            s[0] = (s[0] + rng.gen_range(-jitter..jitter)).clamp(domain.x_min, domain.x_max);
            s[1] = (s[1] + rng.gen_range(-jitter..jitter)).clamp(domain.y_min, domain.y_max);
        }
    }
    Err(Error::MeshGeneration(format!(
        "duplicate seeds persisted after {MAX_SEED_ATTEMPTS} perturbations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::check_mesh_assumptions;

    #[test]
    fn symmetric_seeds_give_grid() {
        let seeds = [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]];
        let m = voronoi_mesh_from_seeds(&seeds, Rectangle::unit_square(), 0, VoronoiOptions::default()).unwrap();
        assert_eq!(m.num_cells(), 4);
        assert_eq!(m.num_vertices(), 9);
        for c in m.cells() {
            assert_eq!(c.num_vertices(), 4);
            assert!((c.area - 0.25).abs() < 1e-15);
            assert!((c.diameter - 0.5 * 2f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn lloyd_mesh_tiles_and_is_regular() {
        let m = generate_voronoi_mesh(64, Rectangle::unit_square(), 20, 7).unwrap();
        assert_eq!(m.num_cells(), 64);
        assert!((m.total_area() - 1.0).abs() < 1e-10);
        let report = check_mesh_assumptions(&m, 0.05);
        assert!(report.min_edge_ratio > 0.0);
        assert!(report.cells.iter().all(|c| c.star_shaped));
        assert!(report.passes);
    }

    #[test]
    fn deterministic_in_seed() {
        let a = generate_voronoi_mesh(50, Rectangle::unit_square(), 5, 1).unwrap();
        let b = generate_voronoi_mesh(50, Rectangle::unit_square(), 5, 1).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let seeds = [[0.25, 0.25], [0.25, 0.25], [0.25, 0.75], [0.75, 0.75]];
        assert!(voronoi_mesh_from_seeds(&seeds, Rectangle::unit_square(), 0, VoronoiOptions::default()).is_err());
        assert!(generate_voronoi_mesh(3, Rectangle::unit_square(), 0, 0).is_err());
    }

    #[test]
    fn clip_keeps_inside() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let half = clip_half_plane(&sq, [1.0, 0.0], 0.5);
        assert!((shoelace(&half) - 0.5).abs() < 1e-15);
    }
}
