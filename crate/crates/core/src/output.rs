//! Deterministic file writers: legacy ASCII VTK snapshots, error tables
//! and observed-rate tables.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::assembly::FieldState;
use crate::error::{Error, Result};
use crate::experiments::{fitted_order, pairwise_orders, ErrorReport, Field};
use crate::mesh::PolygonalMesh;

/// VTK cell type for a general polygon.
pub const VTK_POLYGON: u8 = 7;

/// Renders a snapshot as a legacy ASCII unstructured grid.
///
/// Coordinates and scalars use the shortest representation that parses back
/// to the same `f64`.
pub fn format_vtk_snapshot(mesh: &PolygonalMesh, state: &FieldState) -> Result<String> {
    let n = mesh.num_vertices();
    if state.v.len() != n || state.w.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if state.v.len() != n { state.v.len() } else { state.w.len() },
        });
    }
    let mut s = String::with_capacity(64 * n);
    s.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(s, "fhn-vem snapshot t={:?}", state.t);
    s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {n} double");
    for p in mesh.vertices() {
        let _ = writeln!(s, "{:?} {:?} 0.0", p.x, p.y);
    }
    let cells = mesh.cells();
    let size: usize = cells.iter().map(|c| 1 + c.vertex_ids.len()).sum();
    let _ = writeln!(s, "CELLS {} {size}", cells.len());
    for c in cells {
        let _ = write!(s, "{}", c.vertex_ids.len());
        for id in &c.vertex_ids {
            let _ = write!(s, " {id}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "CELL_TYPES {}", cells.len());
    for _ in cells {
        let _ = writeln!(s, "{VTK_POLYGON}");
    }
    let _ = writeln!(s, "POINT_DATA {n}");
    for (name, values) in [("v", &state.v), ("w", &state.w)] {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for x in values.iter() {
            let _ = writeln!(s, "{x:?}");
        }
    }
    Ok(s)
}

pub fn write_vtk_snapshot(mesh: &PolygonalMesh, state: &FieldState, path: &Path) -> Result<()> {
    let text = format_vtk_snapshot(mesh, state)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Snapshot file name for step `n`, zero padded so names sort by time.
pub fn snapshot_path(dir: &Path, n: usize) -> PathBuf {
    dir.join(format!("snapshot_{n:06}.vtk"))
}

/// Reads the POINTS section of a legacy VTK file back as `[x, y]` pairs.
pub fn read_vtk_points(text: &str) -> Result<Vec<[f64; 2]>> {
    let bad = |line: usize, message: String| Error::Parse {
        path: "vtk".into(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    let (header_line, count) = loop {
        match lines.next() {
            Some((i, l)) if l.starts_with("POINTS ") => {
                let n = l.split_whitespace().nth(1).and_then(|t| t.parse::<usize>().ok());
                break (i + 1, n.ok_or_else(|| bad(i + 1, "malformed POINTS header".into()))?);
            }
            Some(_) => continue,
            None => return Err(bad(0, "no POINTS section".into())),
        }
    };
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let (i, l) = lines
            .next()
            .ok_or_else(|| bad(header_line, "POINTS section truncated".into()))?;
        let xs: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| bad(i + 1, e.to_string())))
            .collect::<Result<_>>()?;
        if xs.len() != 3 {
            return Err(bad(i + 1, format!("expected 3 coordinates, found {}", xs.len())));
        }
        points.push([xs[0], xs[1]]);
    }
    Ok(points)
}

/// Fifteen significant digits.
fn sig15(x: f64) -> String {
    format!("{x:.14e}")
}

/// Column label for a time step: `dt_1_80` when `1/dt` is an integer.
pub fn dt_label(dt: f64) -> String {
    let inv = 1.0 / dt;
    let r = inv.round();
    if r >= 1.0 && (inv - r).abs() <= 1e-9 * r {
        format!("dt_1_{}", r as u64)
    } else {
        format!("dt_{}", sig15(dt))
    }
}

/// Error table: header `h,dt_...`, one row per mesh level.
pub fn format_error_csv(hs: &[f64], dts: &[f64], errors: &[Vec<f64>]) -> String {
    let mut s = String::from("h");
    for &dt in dts {
        s.push(',');
        s.push_str(&dt_label(dt));
    }
    s.push('\n');
    for (h, row) in hs.iter().zip(errors) {
        s.push_str(&sig15(*h));
        for e in row {
            s.push(',');
            s.push_str(&sig15(*e));
        }
        s.push('\n');
    }
    s
}

/// Observed orders: the fitted slope per column (space) and per row (time),
/// plus consecutive pairwise orders separated by `;`.
pub fn format_rates_csv(report: &ErrorReport) -> String {
    let mut s = String::from("field,direction,fixed,fitted_order,pairwise_orders\n");
    for (field, name) in [(Field::V, "v"), (Field::W, "w")] {
        let table = report.errors(field);
        if report.hs.len() >= 2 {
            for (j, &dt) in report.dts.iter().enumerate() {
                let col = report.column(field, j);
                push_rate(&mut s, name, "space", &dt_label(dt), &report.hs, &col);
            }
        }
        if report.dts.len() >= 2 {
            for (i, &h) in report.hs.iter().enumerate() {
                push_rate(&mut s, name, "time", &format!("h_{}", sig15(h)), &report.dts, &table[i]);
            }
        }
    }
    s
}

fn push_rate(s: &mut String, field: &str, dir: &str, fixed: &str, x: &[f64], y: &[f64]) {
    let pairs: Vec<String> = pairwise_orders(x, y).into_iter().map(sig15).collect();
    let _ = writeln!(s, "{field},{dir},{fixed},{},{}", sig15(fitted_order(x, y)), pairs.join(";"));
}

/// Writes `errors_v.csv`, `errors_w.csv` and `rates.csv` into `dir`.
pub fn write_error_csv(report: &ErrorReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        ("errors_v.csv", format_error_csv(&report.hs, &report.dts, &report.errors_v)),
        ("errors_w.csv", format_error_csv(&report.hs, &report.dts, &report.errors_w)),
        ("rates.csv", format_rates_csv(report)),
    ];
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
