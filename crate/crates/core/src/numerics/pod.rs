use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::dense::orthonormalize_against;
use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

/// Relative threshold below which Gram eigenvalues count as zero.
const EIG_FLOOR: f64 = 1e-14;

/// Compressed snapshot set: `G`-orthonormal modes and their singular values.
#[derive(Debug, Clone)]
pub struct PodResult {
    pub modes: DMatrix<f64>,
    pub singular_values: Vec<f64>,
}

impl PodResult {
    pub fn rank(&self) -> usize {
        self.modes.ncols()
    }

    fn empty(n: usize) -> Self {
        PodResult { modes: DMatrix::zeros(n, 0), singular_values: Vec::new() }
    }

    /// Modes scaled by their singular values; carries the retained snapshot energy.
    pub fn weighted_modes(&self) -> DMatrix<f64> {
        let mut w = self.modes.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            w.column_mut(j).scale_mut(*s);
        }
        w
    }
}

/// Proper orthogonal decomposition by the method of snapshots.
///
/// Keeps the smallest number of modes `r` with
/// `Σ_s ‖s − Π s‖²_G < eps` (or `= 0` when `eps == 0`).
pub fn pod(snapshots: &DMatrix<f64>, g: &SparseMatrix, eps: f64) -> Result<PodResult> {
    let n = g.dim();
    if snapshots.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "pod: snapshots have {} rows, inner product {n}",
            snapshots.nrows()
        )));
    }
    if snapshots.ncols() == 0 {
        return Err(Error::InvalidInput("pod: no snapshots".into()));
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidInput(format!("pod: tolerance must be nonnegative, got {eps}")));
    }
    if snapshots.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("pod: non-finite snapshot entry".into()));
    }

    let gs = g.mul_mat(snapshots);
    let mut c = snapshots.transpose() * gs;
    c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lmax = eig.eigenvalues[order[0]].max(0.0);
    if lmax == 0.0 {
        return Ok(PodResult::empty(n));
    }
    let lambda: Vec<f64> = order
        .iter()
        .map(|&i| {
            let l = eig.eigenvalues[i];
            if l < EIG_FLOOR * lmax {
                0.0
            } else {
                l
            }
        })
        .collect();

    // Minimal r such that the discarded energy satisfies the bound.
    let mut tail: f64 = lambda.iter().sum();
    let mut r = 0;
    while r < lambda.len() {
        let ok = if eps == 0.0 { tail <= 0.0 } else { tail < eps };
        if ok || lambda[r] == 0.0 {
            break;
        }
        tail -= lambda[r];
        r += 1;
    }

    let mut raw = DMatrix::zeros(n, r);
    for (j, &i) in order.iter().take(r).enumerate() {
        let v: DVector<f64> = eig.eigenvectors.column(i).into_owned();
        raw.set_column(j, &(snapshots * v / lambda[j].sqrt()));
    }
    let modes = orthonormalize_against(g, &DMatrix::zeros(n, 0), &raw, 1e-10);
    let singular_values = lambda.iter().take(modes.ncols()).map(|l| l.sqrt()).collect();
    Ok(PodResult { modes, singular_values })
}

/// Incremental hierarchical POD over a chain of snapshot chunks.
///
/// Each chunk is compressed together with the weighted modes of the previous
/// step. Intermediate nodes receive the share `omega` of the error budget and the
/// final node the rest; the local tolerances are chosen so that the square roots
/// add up to `sqrt(eps_pod)`, which bounds the total projection error.
pub fn hapod(chunks: &[DMatrix<f64>], g: &SparseMatrix, eps_pod: f64, omega: f64) -> Result<PodResult> {
    if chunks.is_empty() {
        return Err(Error::InvalidInput("hapod: no snapshot chunks".into()));
    }
    if !(eps_pod > 0.0) {
        return Err(Error::InvalidInput(format!("hapod: tolerance must be positive, got {eps_pod}")));
    }
    if !(omega > 0.0 && omega < 1.0) {
        return Err(Error::InvalidInput(format!("hapod: omega must lie in (0,1), got {omega}")));
    }
    if chunks.len() == 1 {
        return pod(&chunks[0], g, eps_pod);
    }
    let root = eps_pod.sqrt();
    let inner = (omega * root / (chunks.len() - 1) as f64).powi(2);
    let last = ((1.0 - omega) * root).powi(2);

    let mut acc: Option<PodResult> = None;
    for (j, chunk) in chunks.iter().enumerate() {
        let data = match &acc {
            Some(prev) if prev.rank() > 0 => {
                let w = prev.weighted_modes();
                let mut m = DMatrix::zeros(chunk.nrows(), w.ncols() + chunk.ncols());
                m.columns_mut(0, w.ncols()).copy_from(&w);
                m.columns_mut(w.ncols(), chunk.ncols()).copy_from(chunk);
                m
            }
            _ => chunk.clone(),
        };
        let tol = if j + 1 == chunks.len() { last } else { inner };
        acc = Some(pod(&data, g, tol)?);
    }
    Ok(acc.expect("at least one chunk"))
}

/// `Σ_s ‖s − Π s‖²_G` for the `G`-orthogonal projection onto `modes`.
pub fn projection_error(snapshots: &DMatrix<f64>, modes: &DMatrix<f64>, g: &SparseMatrix) -> f64 {
    let deflated = deflate(snapshots, modes, g);
    let gd = g.mul_mat(&deflated);
    deflated.component_mul(&gd).sum().max(0.0)
}

/// Removes the `G`-orthogonal projection onto the (orthonormal) `modes`, twice.
pub fn deflate(snapshots: &DMatrix<f64>, modes: &DMatrix<f64>, g: &SparseMatrix) -> DMatrix<f64> {
    if modes.ncols() == 0 {
        return snapshots.clone();
    }
    let g_modes = g.mul_mat(modes);
    let mut d = snapshots.clone();
    for _ in 0..2 {
        let coeff = g_modes.transpose() * &d;
        d -= modes * coeff;
    }
    d
}
