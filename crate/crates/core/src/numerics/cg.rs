use nalgebra::DVector;

use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

/// Jacobi-preconditioned conjugate gradients for SPD systems.
///
/// Returns the solution and the number of iterations taken. The stopping test
/// is on the true residual, `‖Ax − b‖ ≤ rtol·‖b‖`.
pub fn cg_solve(a: &SparseMatrix, b: &DVector<f64>, rtol: f64, max_iter: usize) -> Result<(DVector<f64>, usize)> {
    let mut x = DVector::zeros(b.len());
    let iters = cg_solve_into(a, b.as_slice(), x.as_mut_slice(), rtol, max_iter)?;
    Ok((x, iters))
}

/// CG starting from the initial guess already stored in `x`.
pub fn cg_solve_into(a: &SparseMatrix, b: &[f64], x: &mut [f64], rtol: f64, max_iter: usize) -> Result<usize> {
    let n = a.dim();
    if b.len() != n || x.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "cg: matrix {n}, rhs {}, guess {}",
            b.len(),
            x.len()
        )));
    }
    if !(rtol > 0.0) {
        return Err(Error::InvalidInput(format!("cg: rtol must be positive, got {rtol}")));
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.fill(0.0);
        return Ok(0);
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("cg: non-finite right-hand side".into()));
    }
    let target = rtol * bnorm;
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut iters = 0;
    let mut rnorm = f64::INFINITY;

    // Outer restarts guard against drift between the recursive and true residual.
    while iters < max_iter {
        a.mul_vec_into(x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        rnorm = norm(&r);
        if rnorm <= target {
            return Ok(iters);
        }
        for i in 0..n {
            z[i] = inv_diag[i] * r[i];
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iters < max_iter {
            a.mul_vec_into(&p, &mut q);
            let pq = dot(&p, &q);
            if !(pq > 0.0) {
                return Err(Error::SingularSystem(format!("cg: nonpositive curvature {pq:.3e}")));
            }
            let alpha = rz / pq;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            iters += 1;
            rnorm = norm(&r);
            if rnorm <= 0.5 * target {
                break;
            }
            for i in 0..n {
                z[i] = inv_diag[i] * r[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
    a.mul_vec_into(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let true_norm = norm(&r);
    if true_norm <= target {
        return Ok(iters);
    }
    Err(Error::NonConvergence { iters, residual: true_norm.min(rnorm) / bnorm })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
