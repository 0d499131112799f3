use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::cg::cg_solve_into;
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

const BLOCK: usize = 8;
const MAX_ITER: usize = 500;

/// Largest eigenvalue of the pencil `Bx = λAx` (A SPD, B symmetric PSD).
///
/// Block subspace iteration on `A⁻¹B` with CG inner solves and a Rayleigh–Ritz
/// step each sweep. The block guards against the near-degenerate top of the
/// spectrum that weakly coupled subdomains produce. Ritz values approach the top
/// eigenvalue from below; iteration stops once the relative change drops well
/// under `tol`.
pub fn max_gen_eig(b: &SparseMatrix, a: &SparseMatrix, tol: f64) -> Result<f64> {
    let n = a.dim();
    if b.dim() != n {
        return Err(Error::DimensionMismatch(format!("max_gen_eig: {} vs {n}", b.dim())));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("max_gen_eig: tolerance must be positive, got {tol}")));
    }
    if n <= 64 {
        return dense_max_gen_eig(b, a);
    }
    let k = BLOCK.min(n);
    // Deterministic, non-degenerate start block.
    let mut v = DMatrix::from_fn(n, k, |i, j| {
        let x = ((i + 1) * (j + 3)) as f64;
        1.0 + 0.5 * (x * 0.618_033_988_75).sin()
    });
    let mut prev = 0.0_f64;
    let mut w = DMatrix::zeros(n, k);
    let inner_tol = (tol * 1e-2).max(1e-10);
    for iter in 0..MAX_ITER {
        let bv = b.mul_mat(&v);
        for j in 0..k {
            let rhs: Vec<f64> = bv.column(j).iter().copied().collect();
            let mut x: Vec<f64> = v.column(j).iter().copied().collect();
            cg_solve_into(a, &rhs, &mut x, inner_tol, 20 * n)?;
            w.set_column(j, &DVector::from_vec(x));
        }
        // Rayleigh–Ritz on span(W).
        let aw = a.mul_mat(&w);
        let bw = b.mul_mat(&w);
        let ap = w.transpose() * &aw;
        let bp = w.transpose() * &bw;
        let (theta, y) = projected_pencil(&ap, &bp)?;
        v = &w * y;
        // Normalize columns to keep magnitudes tame.
        for mut c in v.column_iter_mut() {
            let nrm = c.norm();
            if nrm > 0.0 {
                c /= nrm;
            }
        }
        let top = theta;
        if iter > 0 && (top - prev).abs() <= 1e-2 * tol * top.abs().max(f64::MIN_POSITIVE) {
            return Ok(top);
        }
        prev = top;
    }
    Err(Error::NonConvergence { iters: MAX_ITER, residual: f64::NAN })
}

/// Solves the small generalized problem via Cholesky of `ap`; returns the largest
/// eigenvalue and the Ritz vectors sorted by decreasing eigenvalue.
fn projected_pencil(ap: &DMatrix<f64>, bp: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
    let ap = (ap + ap.transpose()) * 0.5;
    let bp = (bp + bp.transpose()) * 0.5;
    let chol = ap
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularSystem("max_gen_eig: projected A not SPD".into()))?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularSystem("max_gen_eig: projected A singular".into()))?;
    let c = &l_inv * bp * l_inv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let z = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |i, j| eig.eigenvectors[(i, order[j])]);
    let y = l_inv.transpose() * z;
    Ok((eig.eigenvalues[order[0]], y))
}

fn dense_max_gen_eig(b: &SparseMatrix, a: &SparseMatrix) -> Result<f64> {
    let (top, _) = projected_pencil(&a.to_dense(), &b.to_dense())?;
    Ok(top)
}
