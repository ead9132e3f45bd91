//! Element-level virtual element machinery for the lowest-order space.
//!
//! Local degrees of freedom are the vertex values. Everything the scheme
//! needs from a cell goes through the polynomial projections:
//!
//! - the energy projector, computed from boundary integrals of the basis
//!   functions (their traces are linear, so the edge integrals are exact) and
//!   fixed on constants by the vertex average;
//! - the `L^2` projector, computed from the moments of the enhanced space.
//!   For linear polynomials the enhancement constraint makes those moments
//!   equal to the moments of the energy projection, so the two coincide.
//!
//! Polynomials are expanded in the scaled monomials
//! `{1, (x - x_K)/h_K, (y - y_K)/h_K}`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mesh::{polygon_centroid, shoelace, PolygonalMesh};
use crate::model::Kinetics;
use crate::quadrature::{PolygonQuadrature, EXACT_DEGREE};

/// Scaled monomial basis of the linear polynomials on one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledMonomialBasis {
    pub centroid: [f64; 2],
    pub diameter: f64,
    pub degree: usize,
}

impl ScaledMonomialBasis {
    pub const DIM: usize = 3;

    pub fn new(centroid: [f64; 2], diameter: f64) -> Self {
        ScaledMonomialBasis {
            centroid,
            diameter,
            degree: 1,
        }
    }

    pub fn eval(&self, p: [f64; 2]) -> [f64; 3] {
        [
            1.0,
            (p[0] - self.centroid[0]) / self.diameter,
            (p[1] - self.centroid[1]) / self.diameter,
        ]
    }

    /// Gradients of the three monomials (constant for degree one).
    pub fn gradients(&self) -> [[f64; 2]; 3] {
        let s = 1.0 / self.diameter;
        [[0.0, 0.0], [s, 0.0], [0.0, s]]
    }

    /// Coefficients of `c0 + cx x + cy y` in this basis.
    pub fn coefficients_of_linear(&self, c0: f64, cx: f64, cy: f64) -> [f64; 3] {
        [
            c0 + cx * self.centroid[0] + cy * self.centroid[1],
            cx * self.diameter,
            cy * self.diameter,
        ]
    }

    pub fn eval_expansion(&self, coeffs: &[f64], p: [f64; 2]) -> f64 {
        let m = self.eval(p);
        m[0] * coeffs[0] + m[1] * coeffs[1] + m[2] * coeffs[2]
    }
}

/// Geometry and quadrature of one polygonal cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalCell {
    pub points: Vec<[f64; 2]>,
    pub area: f64,
    pub basis: ScaledMonomialBasis,
    pub quadrature: PolygonQuadrature,
}

impl LocalCell {
    pub fn from_polygon(points: &[[f64; 2]]) -> Result<Self> {
        let area = shoelace(points);
        if !(area > 0.0) || points.len() < 3 {
            return Err(Error::DegenerateCell {
                cell: usize::MAX,
                reason: "polygon must be counter-clockwise with positive area".into(),
            });
        }
        let centroid = polygon_centroid(points, area);
        let mut diameter: f64 = 0.0;
        for (i, p) in points.iter().enumerate() {
            for q in &points[i + 1..] {
                diameter = diameter.max((p[0] - q[0]).hypot(p[1] - q[1]));
            }
        }
        Ok(Self::with_geometry(points.to_vec(), area, centroid, diameter))
    }

    pub fn from_mesh(mesh: &PolygonalMesh, c: usize) -> Self {
        let cell = &mesh.cells()[c];
        Self::with_geometry(mesh.cell_points(c), cell.area, cell.centroid, cell.diameter)
    }

    fn with_geometry(points: Vec<[f64; 2]>, area: f64, centroid: [f64; 2], diameter: f64) -> Self {
        let quadrature = PolygonQuadrature::fan(&points, centroid);
        LocalCell {
            points,
            area,
            basis: ScaledMonomialBasis::new(centroid, diameter),
            quadrature,
        }
    }

    pub fn num_dofs(&self) -> usize {
        self.points.len()
    }

    pub fn diameter(&self) -> f64 {
        self.basis.diameter
    }

    /// Monomials evaluated at the vertices: rows are DoFs, columns monomials.
    pub fn dof_matrix(&self) -> DMatrix<f64> {
        let n = self.num_dofs();
        let mut d = DMatrix::zeros(n, 3);
        for (i, &p) in self.points.iter().enumerate() {
            let m = self.basis.eval(p);
            for a in 0..3 {
                d[(i, a)] = m[a];
            }
        }
        d
    }

    /// `int_K m_a m_b`.
    pub fn monomial_gram(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(3, 3);
        for (&p, &w) in self.quadrature.points.iter().zip(&self.quadrature.weights) {
            let m = self.basis.eval(p);
            for a in 0..3 {
                for b in 0..3 {
                    h[(a, b)] += w * m[a] * m[b];
                }
            }
        }
        h
    }

    /// Right-hand side of the energy projection: row 0 is the vertex average,
    /// rows 1-2 are `int_{dK} grad m_a . n phi_i`.
    fn projection_rhs(&self) -> DMatrix<f64> {
        let n = self.num_dofs();
        let grads = self.basis.gradients();
        let mut b = DMatrix::zeros(3, n);
        for i in 0..n {
            b[(0, i)] = 1.0 / n as f64;
            // phi_i is the hat on the two edges meeting at vertex i; the
            // trapezoid rule is exact on those linear traces
            let prev = self.points[(i + n - 1) % n];
            let next = self.points[(i + 1) % n];
            // |e_prev| n_prev + |e_next| n_next for CCW polygons
            let weighted_normal = [next[1] - prev[1], prev[0] - next[0]];
            for a in 1..3 {
                b[(a, i)] = 0.5 * (grads[a][0] * weighted_normal[0] + grads[a][1] * weighted_normal[1]);
            }
        }
        b
    }
}

/// Coefficients of the energy projection of each basis function (3 x N),
/// along with the projection Gram matrix `G = B D`.
pub fn build_energy_projector(cell: &LocalCell) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let b = cell.projection_rhs();
    let g = &b * cell.dof_matrix();
    let lu = g.clone().lu();
    let pi = lu.solve(&b).ok_or_else(|| Error::DegenerateCell {
        cell: usize::MAX,
        reason: "singular projection Gram matrix".into(),
    })?;
    Ok((pi, g))
}

/// Coefficients of the `L^2` projection of each basis function (3 x N).
///
/// The moments `int_K phi_i m_a` are read off the enhanced space, where they
/// equal the moments of the energy projection for every linear `m_a`.
pub fn build_l2_projector(cell: &LocalCell, energy_projector: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let h = cell.monomial_gram();
    let moments = &h * energy_projector;
    let chol = h.cholesky().ok_or_else(|| Error::DegenerateCell {
        cell: usize::MAX,
        reason: "monomial Gram matrix not positive definite".into(),
    })?;
    Ok(chol.solve(&moments))
}

/// `(I - D P)^T (I - D P)`: the vertex-value dot product of the non-polynomial remainder.
fn remainder_product(dof: &DMatrix<f64>, projector: &DMatrix<f64>) -> DMatrix<f64> {
    let n = dof.nrows();
    let rem = DMatrix::identity(n, n) - dof * projector;
    rem.transpose() * rem
}

/// Consistency and stabilization parts of the local stiffness matrix.
pub fn build_local_stiffness(cell: &LocalCell, energy_projector: &DMatrix<f64>, gram: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut g_tilde = gram.clone();
    g_tilde.row_mut(0).fill(0.0);
    let consistency = energy_projector.transpose() * g_tilde * energy_projector;
    let stabilization = remainder_product(&cell.dof_matrix(), energy_projector);
    (consistency, stabilization)
}

/// Consistency and stabilization parts of the local mass matrix; the
/// stabilization carries the `h_K^2` scaling.
pub fn build_local_mass(cell: &LocalCell, l2_projector: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let h = cell.monomial_gram();
    let consistency = l2_projector.transpose() * h * l2_projector;
    let hk2 = cell.diameter() * cell.diameter();
    let stabilization = remainder_product(&cell.dof_matrix(), l2_projector) * hk2;
    (consistency, stabilization)
}

/// All per-cell operators, built once and reused for every time step.
#[derive(Debug, Clone)]
pub struct ElementOperators {
    pub cell: LocalCell,
    pub dof_matrix: DMatrix<f64>,
    pub energy_projector: DMatrix<f64>,
    pub l2_projector: DMatrix<f64>,
    pub stiffness_consistency: DMatrix<f64>,
    pub stiffness_stabilization: DMatrix<f64>,
    pub mass_consistency: DMatrix<f64>,
    pub mass_stabilization: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    /// Scaled monomials at the quadrature nodes.
    quad_monomials: Vec<[f64; 3]>,
    /// `int_K Pi0 phi_i`.
    pub moment_weights: DVector<f64>,
}

impl ElementOperators {
    pub fn new(cell: LocalCell) -> Result<Self> {
        let (energy_projector, gram) = build_energy_projector(&cell)?;
        let l2_projector = build_l2_projector(&cell, &energy_projector)?;
        let (stiffness_consistency, stiffness_stabilization) = build_local_stiffness(&cell, &energy_projector, &gram);
        let (mass_consistency, mass_stabilization) = build_local_mass(&cell, &l2_projector);
        let stiffness = &stiffness_consistency + &stiffness_stabilization;
        let mass = &mass_consistency + &mass_stabilization;
        let quad_monomials: Vec<[f64; 3]> = cell.quadrature.points.iter().map(|&p| cell.basis.eval(p)).collect();
        let mut m_int = [0.0; 3];
        for (m, w) in quad_monomials.iter().zip(&cell.quadrature.weights) {
            for a in 0..3 {
                m_int[a] += w * m[a];
            }
        }
        let moment_weights = l2_projector.transpose() * DVector::from_row_slice(&m_int);
        Ok(ElementOperators {
            dof_matrix: cell.dof_matrix(),
            cell,
            energy_projector,
            l2_projector,
            stiffness_consistency,
            stiffness_stabilization,
            mass_consistency,
            mass_stabilization,
            stiffness,
            mass,
            quad_monomials,
            moment_weights,
        })
    }

    pub fn from_mesh(mesh: &PolygonalMesh, c: usize) -> Result<Self> {
        Self::new(LocalCell::from_mesh(mesh, c)).map_err(|e| match e {
            Error::DegenerateCell { reason, .. } => Error::DegenerateCell { cell: c, reason },
            other => other,
        })
    }

    pub fn num_dofs(&self) -> usize {
        self.cell.num_dofs()
    }

    /// Coefficients of `Pi0 v` in the scaled monomial basis.
    pub fn project(&self, local_dofs: &[f64]) -> [f64; 3] {
        let mut c = [0.0; 3];
        for (i, v) in local_dofs.iter().enumerate() {
            for (a, ca) in c.iter_mut().enumerate() {
                *ca += self.l2_projector[(a, i)] * v;
            }
        }
        c
    }

    /// `int_K f(Pi0 v, Pi0 w) Pi0 phi_i` for each local basis function.
    fn reaction_form(&self, v: &[f64], w: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let cv = self.project(v);
        let cw = self.project(w);
        let mut r = [0.0; 3];
        for (m, wq) in self.quad_monomials.iter().zip(&self.cell.quadrature.weights) {
            let vq = cv[0] * m[0] + cv[1] * m[1] + cv[2] * m[2];
            let wq_val = cw[0] * m[0] + cw[1] * m[1] + cw[2] * m[2];
            let fq = wq * f(vq, wq_val);
            for a in 0..3 {
                r[a] += fq * m[a];
            }
        }
        (0..self.num_dofs())
            .map(|i| (0..3).map(|a| self.l2_projector[(a, i)] * r[a]).sum())
            .collect()
    }

    /// `int_K g Pi0 phi_i` for a pointwise source `g`.
    pub fn load_vector(&self, g: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        let mut r = [0.0; 3];
        for ((m, wq), &p) in self
            .quad_monomials
            .iter()
            .zip(&self.cell.quadrature.weights)
            .zip(&self.cell.quadrature.points)
        {
            let gq = wq * g(p);
            for a in 0..3 {
                r[a] += gq * m[a];
            }
        }
        (0..self.num_dofs())
            .map(|i| (0..3).map(|a| self.l2_projector[(a, i)] * r[a]).sum())
            .collect()
    }
}

fn check_degree(degree: Option<crate::model::PolynomialDegree>, what: &str) -> Result<()> {
    match degree {
        Some(d) if d.in_v.max(d.in_w) < EXACT_DEGREE => Ok(()),
        Some(d) => Err(Error::UnsupportedKinetics(format!(
            "{what} of degree {} exceeds what the degree-{EXACT_DEGREE} quadrature integrates exactly",
            d.in_v.max(d.in_w)
        ))),
        None => Err(Error::UnsupportedKinetics(format!("{what} is not polynomial"))),
    }
}

/// Local ionic vector `b_h^K(v, w, phi_i)`.
pub fn local_ionic_form(ops: &ElementOperators, v: &[f64], w: &[f64], kinetics: &dyn Kinetics) -> Result<Vec<f64>> {
    check_degree(kinetics.ionic_degree(), "ionic current")?;
    check_local_len(ops, v, w)?;
    Ok(ops.reaction_form(v, w, |a, b| kinetics.ionic(a, b)))
}

/// Local gating vector `c_h^K(v, w, phi_i)`.
pub fn local_gating_form(ops: &ElementOperators, v: &[f64], w: &[f64], kinetics: &dyn Kinetics) -> Result<Vec<f64>> {
    check_degree(kinetics.gating_degree(), "gating function")?;
    check_local_len(ops, v, w)?;
    Ok(ops.reaction_form(v, w, |a, b| kinetics.gating(a, b)))
}

fn check_local_len(ops: &ElementOperators, v: &[f64], w: &[f64]) -> Result<()> {
    for x in [v, w] {
        if x.len() != ops.num_dofs() {
            return Err(Error::DimensionMismatch {
                expected: ops.num_dofs(),
                got: x.len(),
            });
        }
    }
    Ok(())
}
