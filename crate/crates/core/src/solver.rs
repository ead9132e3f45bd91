//! Jacobi-preconditioned conjugate gradients for the SPD systems of a time step.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSolveConfig {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for LinearSolveConfig {
    fn default() -> Self {
        LinearSolveConfig {
            tol: 1e-10,
            max_iters: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LinearSolveStats {
    pub iterations: usize,
    /// `||b - A x|| / ||b||` of the returned solution.
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `matrix * x = rhs` for symmetric positive definite `matrix`.
///
/// `initial_guess` warm-starts the iteration. The result is a deterministic
/// function of the inputs.
pub fn solve_spd(
    matrix: &CsrMatrix,
    rhs: &[f64],
    cfg: &LinearSolveConfig,
    initial_guess: Option<&[f64]>,
) -> Result<(Vec<f64>, LinearSolveStats)> {
    let n = matrix.dim();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    let b_norm = dot(rhs, rhs).sqrt();
    if b_norm == 0.0 {
        return Ok((vec![0.0; n], LinearSolveStats::default()));
    }
    let inv_diag: Vec<f64> = matrix
        .diagonal()
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            if d > 0.0 {
                Ok(1.0 / d)
            } else {
                Err(Error::NotPositiveDefinite { iteration: i })
            }
        })
        .collect::<Result<_>>()?;

    let mut x = match initial_guess {
        Some(g) if g.len() == n => g.to_vec(),
        Some(g) => {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: g.len(),
            })
        }
        None => vec![0.0; n],
    };
    let mut r = matrix.mul_vec(&x);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = dot(&r, &r).sqrt() / b_norm;
    let mut it = 0;
    while res > cfg.tol {
        if it >= cfg.max_iters {
            return Err(Error::SolverFailure(LinearSolveStats {
                iterations: it,
                relative_residual: res,
            }));
        }
        matrix.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotPositiveDefinite { iteration: it });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = dot(&r, &r).sqrt() / b_norm;
        it += 1;
    }
    // report the true residual, not the recursively updated one
    let ax = matrix.mul_vec(&x);
    let true_res = ax
        .iter()
        .zip(rhs)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt()
        / b_norm;
    Ok((
        x,
        LinearSolveStats {
            iterations: it,
            relative_residual: true_res,
        },
    ))
}
