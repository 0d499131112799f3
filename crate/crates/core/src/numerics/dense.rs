use nalgebra::{DMatrix, DVector};

use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

/// Solves `(A + ηI) α = Y` for a symmetric kernel matrix.
///
/// Cholesky first; if a pivot drops below `1e-14` relative to the largest
/// diagonal entry the system is re-solved with a QR factorization.
pub fn solve_regularized_interpolation(a: &DMatrix<f64>, eta: f64, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || y.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "interpolation: matrix {}x{}, rhs {} rows",
            a.nrows(),
            a.ncols(),
            y.nrows()
        )));
    }
    if !(eta >= 0.0) {
        return Err(Error::InvalidInput(format!("regularization must be nonnegative, got {eta}")));
    }
    let mut reg = a.clone();
    for i in 0..n {
        reg[(i, i)] += eta;
    }
    let max_diag = (0..n).map(|i| reg[(i, i)].abs()).fold(0.0, f64::max);
    if let Some(chol) = reg.clone().cholesky() {
        let l = chol.l_dirty();
        let min_pivot = (0..n).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
        if min_pivot >= 1e-14 * max_diag {
            return Ok(chol.solve(y));
        }
    }
    let qr = reg.qr();
    let r = qr.r();
    let rmax = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let rmin = (0..n).map(|i| r[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if !(rmin > 1e-14 * rmax) {
        return Err(Error::SingularSystem("regularized interpolation matrix is singular".into()));
    }
    qr.solve(y)
        .filter(|x| x.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::SingularSystem("regularized interpolation matrix is singular".into()))
}

/// `G`-inner products `Xᵀ G Y`.
pub fn gram(g: &SparseMatrix, x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    x.transpose() * g.mul_mat(y)
}

/// Orthonormalizes the columns of `new` against the `G`-orthonormal columns of
/// `basis` and among themselves. The block is projected against `basis` once,
/// and again for the columns that lost more than half their norm. Each column
/// is then projected against the previously accepted columns, repeating (now
/// including `basis`) while a pass removes more than half of the remaining
/// norm, at most four passes. Columns whose remaining norm falls below
/// `drop_tol` times their original norm are discarded.
///
/// Returns only the accepted new columns; `basis` itself is left untouched.
pub fn orthonormalize_against(
    g: &SparseMatrix,
    basis: &DMatrix<f64>,
    new: &DMatrix<f64>,
    drop_tol: f64,
) -> DMatrix<f64> {
    const MAX_PASSES: usize = 4;
    let n = g.dim();
    let g_basis_t = g.mul_mat(basis).transpose();
    let norms0: Vec<f64> =
        g.mul_mat(new).column_iter().zip(new.column_iter()).map(|(gx, x)| gx.dot(&x).max(0.0).sqrt()).collect();
    // Block projection against the existing basis, repeated for the columns
    // that lost more than half of their norm.
    let mut work = new.clone_owned();
    if basis.ncols() > 0 {
        let c = &g_basis_t * &work;
        work.gemm(-1.0, basis, &c, 1.0);
        let after = g.mul_mat(&work);
        let again: Vec<usize> = (0..work.ncols())
            .filter(|&j| after.column(j).dot(&work.column(j)).max(0.0).sqrt() <= 0.5 * norms0[j])
            .collect();
        if !again.is_empty() {
            let mut sub = work.select_columns(&again);
            let c = &g_basis_t * &sub;
            sub.gemm(-1.0, basis, &c, 1.0);
            for (k, &j) in again.iter().enumerate() {
                work.set_column(j, &sub.column(k));
            }
        }
    }
    let mut accepted: Vec<DVector<f64>> = Vec::new();
    let mut g_accepted: Vec<DVector<f64>> = Vec::new();
    for (col, &norm0) in work.column_iter().zip(&norms0) {
        if norm0 == 0.0 || !norm0.is_finite() {
            continue;
        }
        let mut x: DVector<f64> = col.into_owned();
        let mut gx = g.mul_vec(&x);
        let mut norm = x.dot(&gx).max(0.0).sqrt();
        for pass in 0..MAX_PASSES {
            if norm <= drop_tol * norm0 {
                break;
            }
            // Later passes repeat the basis projection: heavy cancellation
            // amplifies whatever the block passes left behind.
            if pass > 0 && basis.ncols() > 0 {
                let c = &g_basis_t * &x;
                x.gemv(-1.0, basis, &c, 1.0);
            }
            for (q, gq) in accepted.iter().zip(&g_accepted) {
                let c = gq.dot(&x);
                x.axpy(-c, q, 1.0);
            }
            gx = g.mul_vec(&x);
            let reduced = x.dot(&gx).max(0.0).sqrt();
            let settled = reduced > 0.5 * norm;
            norm = reduced;
            if settled {
                break;
            }
        }
        if norm <= drop_tol * norm0 {
            continue;
        }
        accepted.push(x / norm);
        g_accepted.push(gx / norm);
    }
    let mut out = DMatrix::zeros(n, accepted.len());
    for (j, x) in accepted.iter().enumerate() {
        out.set_column(j, x);
    }
    out
}

/// Largest absolute entry of `XᵀGX − I`.
pub fn orthonormality_defect(g: &SparseMatrix, x: &DMatrix<f64>) -> f64 {
    let mut gr = gram(g, x, x);
    for i in 0..gr.nrows() {
        gr[(i, i)] -= 1.0;
    }
    gr.amax()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel() {
        let a = DMatrix::identity(3, 3);
        let y = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(solve_regularized_interpolation(&a, 0.0, &y).unwrap(), y);
        let half = solve_regularized_interpolation(&a, 1.0, &y).unwrap();
        assert!((half - &y / 2.0).amax() < 1e-15);
    }

    #[test]
    fn singular_without_regularization_falls_back_or_fails() {
        let a = DMatrix::from_element(2, 2, 1.0);
        let y = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        assert!(solve_regularized_interpolation(&a, 0.0, &y).is_err());
    }

    #[test]
    fn orthonormalization_drops_dependent_columns() {
        let g = SparseMatrix::from_dense(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0])), true);
        let basis = DMatrix::zeros(3, 0);
        let new = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 1.0, 2.0, 1.0, 0.0, 0.0, 0.0]);
        let q = orthonormalize_against(&g, &basis, &new, 1e-12);
        assert_eq!(q.ncols(), 2);
        assert!(orthonormality_defect(&g, &q) < 1e-14);
    }
}
