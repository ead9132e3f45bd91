//! Global degrees of freedom, sparse operators and the nonlinear load vectors.
//!
//! Global DoFs are the mesh vertices, numbered as in the mesh. The stiffness
//! and mass matrices share one vertex-adjacency pattern, so a system matrix
//! `alpha M + beta A` is a cheap entrywise combination.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::PolygonalMesh;
use crate::model::{Kinetics, ModelSpec};
use crate::sparse::CsrMatrix;
use crate::vem::{local_gating_form, local_ionic_form, ElementOperators};

/// Vertex-based DoF numbering with per-cell local-to-global lists.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    num_dofs: usize,
    cell_dofs: Vec<Vec<usize>>,
}

impl DofMap {
    pub fn new(mesh: &PolygonalMesh) -> Self {
        DofMap {
            num_dofs: mesh.num_vertices(),
            cell_dofs: mesh.cells().iter().map(|c| c.vertex_ids.clone()).collect(),
        }
    }

    pub fn num_dofs(&self) -> usize {
        self.num_dofs
    }

    pub fn cell_dofs(&self, c: usize) -> &[usize] {
        &self.cell_dofs[c]
    }

    pub fn num_cells(&self) -> usize {
        self.cell_dofs.len()
    }

    /// Sorted column lists of the vertex-adjacency pattern (diagonal included).
    pub fn sparsity(&self) -> Vec<Vec<usize>> {
        let mut rows: Vec<Vec<usize>> = (0..self.num_dofs).map(|i| vec![i]).collect();
        for dofs in &self.cell_dofs {
            for &i in dofs {
                rows[i].extend_from_slice(dofs);
            }
        }
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
        }
        rows
    }

    fn gather(&self, c: usize, global: &[f64]) -> Vec<f64> {
        self.cell_dofs[c].iter().map(|&g| global[g]).collect()
    }
}

/// Potential and gating DoF vectors at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub t: f64,
}

impl FieldState {
    pub fn new(v: Vec<f64>, w: Vec<f64>, t: f64) -> Result<Self> {
        if v.len() != w.len() {
            return Err(Error::DimensionMismatch {
                expected: v.len(),
                got: w.len(),
            });
        }
        Ok(FieldState { v, w, t })
    }

    /// Vertex interpolation of closed-form fields.
    pub fn interpolate(mesh: &PolygonalMesh, t: f64, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let (v, w) = mesh.vertices().iter().map(|p| f(p.x, p.y)).unzip();
        FieldState { v, w, t }
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().chain(&self.w).all(|x| x.is_finite())
    }
}

/// Element operators of every cell, built in parallel; order follows the cells.
pub fn build_element_operators(mesh: &PolygonalMesh) -> Result<Vec<ElementOperators>> {
    (0..mesh.num_cells())
        .into_par_iter()
        .map(|c| ElementOperators::from_mesh(mesh, c))
        .collect()
}

/// Global stiffness `A` and mass `M`.
pub fn assemble_global(dofs: &DofMap, elements: &[ElementOperators]) -> Result<(CsrMatrix, CsrMatrix)> {
    if elements.len() != dofs.num_cells() {
        return Err(Error::DimensionMismatch {
            expected: dofs.num_cells(),
            got: elements.len(),
        });
    }
    let pattern = dofs.sparsity();
    let mut a = CsrMatrix::from_pattern(&pattern);
    let mut m = CsrMatrix::from_pattern(&pattern);
    for (c, ops) in elements.iter().enumerate() {
        let ids = dofs.cell_dofs(c);
        if ids.len() != ops.num_dofs() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                got: ops.num_dofs(),
            });
        }
        for (i, &gi) in ids.iter().enumerate() {
            for (j, &gj) in ids.iter().enumerate() {
                a.add(gi, gj, ops.stiffness[(i, j)])?;
                m.add(gi, gj, ops.mass[(i, j)])?;
            }
        }
    }
    Ok((a, m))
}

/// `u_i = sum_K int_K Pi0 phi_i`, so that `J(v) = u . v`.
pub fn projection_weights(dofs: &DofMap, elements: &[ElementOperators]) -> Vec<f64> {
    let mut u = vec![0.0; dofs.num_dofs()];
    for (c, ops) in elements.iter().enumerate() {
        for (i, &g) in dofs.cell_dofs(c).iter().enumerate() {
            u[g] += ops.moment_weights[i];
        }
    }
    u
}

/// `J(v) = sum_K int_K Pi0 v`.
pub fn nonlocal_functional(v: &[f64], dofs: &DofMap, elements: &[ElementOperators]) -> Result<f64> {
    check_len(dofs, v)?;
    let mut j = 0.0;
    for (c, ops) in elements.iter().enumerate() {
        let local = dofs.gather(c, v);
        j += ops.project(&local)[0] * ops.cell.area;
    }
    Ok(j)
}

fn check_len(dofs: &DofMap, x: &[f64]) -> Result<()> {
    if x.len() != dofs.num_dofs() {
        return Err(Error::DimensionMismatch {
            expected: dofs.num_dofs(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Cell-parallel local vectors, scattered serially in cell order so the sum is deterministic.
fn assemble_vector<F>(dofs: &DofMap, elements: &[ElementOperators], local: F) -> Result<Vec<f64>>
where
    F: Fn(usize, &ElementOperators) -> Result<Vec<f64>> + Sync,
{
    let locals: Vec<Vec<f64>> = elements
        .par_iter()
        .enumerate()
        .map(|(c, ops)| local(c, ops))
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; dofs.num_dofs()];
    for (c, vals) in locals.iter().enumerate() {
        for (&g, x) in dofs.cell_dofs(c).iter().zip(vals) {
            out[g] += x;
        }
    }
    Ok(out)
}

/// Global ionic vector `b_h(v, w, phi_i)`.
pub fn assemble_ionic(state: &FieldState, dofs: &DofMap, elements: &[ElementOperators], kinetics: &dyn Kinetics) -> Result<Vec<f64>> {
    check_len(dofs, &state.v)?;
    check_len(dofs, &state.w)?;
    assemble_vector(dofs, elements, |c, ops| {
        local_ionic_form(ops, &dofs.gather(c, &state.v), &dofs.gather(c, &state.w), kinetics)
    })
}

/// Global gating vector `c_h(v, w, phi_i)`.
pub fn assemble_gating(state: &FieldState, dofs: &DofMap, elements: &[ElementOperators], kinetics: &dyn Kinetics) -> Result<Vec<f64>> {
    check_len(dofs, &state.v)?;
    check_len(dofs, &state.w)?;
    assemble_vector(dofs, elements, |c, ops| {
        local_gating_form(ops, &dofs.gather(c, &state.v), &dofs.gather(c, &state.w), kinetics)
    })
}

/// `(Pi0 I_app(., t), Pi0 phi_i)`, with the source sampled at the quadrature nodes.
pub fn assemble_applied_current(t: f64, dofs: &DofMap, elements: &[ElementOperators], model: &ModelSpec) -> Result<Vec<f64>> {
    match model.stimulus {
        Some(s) if s.is_active(t) => assemble_vector(dofs, elements, |_, ops| {
            Ok(ops.load_vector(|p| s.eval(p[0], p[1], t)))
        }),
        _ => Ok(vec![0.0; dofs.num_dofs()]),
    }
}

/// Everything the time stepper needs from the mesh, built once.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub dofs: DofMap,
    pub elements: Vec<ElementOperators>,
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    pub weights: Vec<f64>,
}

impl Discretization {
    pub fn new(mesh: &PolygonalMesh) -> Result<Self> {
        let dofs = DofMap::new(mesh);
        let elements = build_element_operators(mesh)?;
        let (stiffness, mass) = assemble_global(&dofs, &elements)?;
        let weights = projection_weights(&dofs, &elements);
        Ok(Discretization {
            dofs,
            elements,
            stiffness,
            mass,
            weights,
        })
    }

    pub fn num_dofs(&self) -> usize {
        self.dofs.num_dofs()
    }

    /// `J(v)` through the precomputed weights.
    pub fn functional(&self, v: &[f64]) -> f64 {
        self.weights.iter().zip(v).map(|(u, x)| u * x).sum()
    }
}
