//! Polygon quadrature exact for bivariate polynomials of total degree 4.
//!
//! The polygon is split into a fan of triangles around its centroid and each
//! triangle carries the 6-point symmetric degree-4 rule. Triangle weights use
//! the signed Jacobian, so the result stays exact for non-convex simple
//! polygons where some fan triangles are inverted.

/// Barycentric orbits `(a, a, 1 - 2a)` and their weights on a unit-area triangle.
const ORBITS: [(f64, f64); 2] = [
    (0.445_948_490_915_964_886, 0.223_381_589_678_011_466),
    (0.091_576_213_509_770_743, 0.109_951_743_655_321_868),
];

/// Degree the rule integrates exactly.
pub const EXACT_DEGREE: usize = 4;

/// Quadrature nodes and weights over a polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonQuadrature {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl PolygonQuadrature {
    /// Fan rule around `apex`, which is usually the polygon centroid.
    pub fn fan(polygon: &[[f64; 2]], apex: [f64; 2]) -> Self {
        let n = polygon.len();
        let mut points = Vec::with_capacity(6 * n);
        let mut weights = Vec::with_capacity(6 * n);
        for i in 0..n {
            let p = polygon[i];
            let q = polygon[(i + 1) % n];
            let signed_area = 0.5
                * ((p[0] - apex[0]) * (q[1] - apex[1]) - (q[0] - apex[0]) * (p[1] - apex[1]));
            for &(a, w) in &ORBITS {
                let b = 1.0 - 2.0 * a;
                for bary in [[a, a, b], [a, b, a], [b, a, a]] {
                    points.push([
                        bary[0] * apex[0] + bary[1] * p[0] + bary[2] * q[0],
                        bary[0] * apex[1] + bary[1] * p[1] + bary[2] * q[1],
                    ]);
                    weights.push(w * signed_area);
                }
            }
        }
        PolygonQuadrature { points, weights }
    }

    pub fn integrate(&self, f: impl Fn([f64; 2]) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&p, w)| w * f(p))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Bivariate polynomial of total degree at most 4 in the monomials `x^i y^j`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Poly2 {
    coeffs: [[f64; 5]; 5],
}

impl Poly2 {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::zero().with_term(0, 0, c)
    }

    /// `c0 + cx x + cy y`.
    pub fn linear(c0: f64, cx: f64, cy: f64) -> Self {
        Self::zero().with_term(0, 0, c0).with_term(1, 0, cx).with_term(0, 1, cy)
    }

    /// Adds `c x^i y^j`. Panics if `i + j > 4`.
    pub fn with_term(mut self, i: usize, j: usize, c: f64) -> Self {
        assert!(i + j <= EXACT_DEGREE, "degree {} exceeds 4", i + j);
        self.coeffs[i][j] += c;
        self
    }

    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        self.coeffs[i][j]
    }

    pub fn degree(&self) -> usize {
        let mut d = 0;
        for i in 0..5 {
            for j in 0..5 - i {
                if self.coeffs[i][j] != 0.0 {
                    d = d.max(i + j);
                }
            }
        }
        d
    }

    /// Product of two polynomials; `None` when the degree would exceed 4.
    pub fn mul(&self, other: &Poly2) -> Option<Poly2> {
        if self.degree() + other.degree() > EXACT_DEGREE {
            return None;
        }
        let mut out = Poly2::zero();
        for i in 0..5 {
            for j in 0..5 - i {
                let a = self.coeffs[i][j];
                if a == 0.0 {
                    continue;
                }
                for k in 0..5 - i - j {
                    for l in 0..5 - i - j - k {
                        out.coeffs[i + k][j + l] += a * other.coeffs[k][l];
                    }
                }
            }
        }
        Some(out)
    }

    pub fn eval(&self, p: [f64; 2]) -> f64 {
        let mut xs = [1.0; 5];
        let mut ys = [1.0; 5];
        for k in 1..5 {
            xs[k] = xs[k - 1] * p[0];
            ys[k] = ys[k - 1] * p[1];
        }
        let mut s = 0.0;
        for i in 0..5 {
            for j in 0..5 - i {
                s += self.coeffs[i][j] * xs[i] * ys[j];
            }
        }
        s
    }
}

/// Exact integral of a degree-4 polynomial over a simple polygon.
pub fn integrate_polynomial(polygon: &[[f64; 2]], poly: &Poly2) -> f64 {
    let area = crate::mesh::shoelace(polygon);
    let apex = crate::mesh::polygon_centroid(polygon, area);
    PolygonQuadrature::fan(polygon, apex).integrate(|p| poly.eval(p))
}
