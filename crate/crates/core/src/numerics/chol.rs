use std::collections::VecDeque;

use super::sparse::SparseMatrix;
use crate::error::{Error, Result};

/// Envelope (skyline) Cholesky factorization `PAPᵀ = LLᵀ` of a sparse SPD matrix,
/// under a reverse Cuthill–McKee ordering.
///
/// Intended for matrices that are factorized once and solved against many
/// right-hand sides (the energy Riesz map, implicit-Euler steps at a fixed μ).
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    /// perm[new] = old
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let p = a.pattern();
        let vals = a.values();
        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = inv[old];
            for k in p.row_ptr[old]..p.row_ptr[old + 1] {
                let j = inv[p.col_idx[k]];
                if j < i {
                    first[i] = first[i].min(j);
                }
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + (i - first[i] + 1));
        }
        let mut l = vec![0.0; start[n]];
        for old in 0..n {
            let i = inv[old];
            for k in p.row_ptr[old]..p.row_ptr[old + 1] {
                let j = inv[p.col_idx[k]];
                if j <= i {
                    l[start[i] + j - first[i]] += vals[k];
                }
            }
        }
        let max_diag = (0..n).map(|i| l[start[i] + i - first[i]].abs()).fold(0.0, f64::max);
        for i in 0..n {
            let fi = first[i];
            let row_i = start[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let row_j = start[j];
                let mut s = l[row_i + j - fi];
                for k in k0..j {
                    s -= l[row_i + k - fi] * l[row_j + k - fj];
                }
                l[row_i + j - fi] = s / l[row_j + j - fj];
            }
            let mut d = l[row_i + i - fi];
            for k in fi..i {
                let v = l[row_i + k - fi];
                d -= v * v;
            }
            if !(d > 1e-14 * max_diag) {
                return Err(Error::SingularSystem(format!("cholesky pivot {d:.3e} at row {i}")));
            }
            l[row_i + i - fi] = d.sqrt();
        }
        Ok(EnvelopeCholesky { n, perm, first, start, values: l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `Ax = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            let mut s = y[i];
            for k in fi..i {
                s -= row[k - fi] * y[k];
            }
            y[i] = s / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.start[i]..self.start[i + 1]];
            let xi = y[i] / row[i - fi];
            y[i] = xi;
            for k in fi..i {
                y[k] -= row[k - fi] * xi;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = y[new];
        }
    }

    pub fn solve(&self, b: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }

    /// Solves for every column of `b`.
    pub fn solve_mat(&self, b: &nalgebra::DMatrix<f64>) -> nalgebra::DMatrix<f64> {
        let mut x = b.clone();
        for mut c in x.column_iter_mut() {
            self.solve_in_place(c.as_mut_slice());
        }
        x
    }
}

/// Reverse Cuthill–McKee ordering of the matrix graph; returns perm[new] = old.
fn reverse_cuthill_mckee(a: &SparseMatrix) -> Vec<usize> {
    let n = a.dim();
    let p = a.pattern();
    let degree: Vec<usize> = (0..n).map(|i| p.row_ptr[i + 1] - p.row_ptr[i]).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let seed = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| degree[i]).expect("unvisited node");
        let root = peripheral(a, seed, &degree);
        let mut queue = VecDeque::from([root]);
        visited[root] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = p.col_idx[p.row_ptr[v]..p.row_ptr[v + 1]]
                .iter()
                .copied()
                .filter(|&w| !visited[w])
                .collect();
            nb.sort_by_key(|&w| (degree[w], w));
            for w in nb {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

/// A pseudo-peripheral node of the component containing `seed`.
fn peripheral(a: &SparseMatrix, seed: usize, degree: &[usize]) -> usize {
    let p = a.pattern();
    let n = a.dim();
    let mut root = seed;
    let mut best_depth = 0;
    for _ in 0..5 {
        let mut level = vec![usize::MAX; n];
        level[root] = 0;
        let mut queue = VecDeque::from([root]);
        let mut last = root;
        while let Some(v) = queue.pop_front() {
            last = v;
            for &w in &p.col_idx[p.row_ptr[v]..p.row_ptr[v + 1]] {
                if level[w] == usize::MAX {
                    level[w] = level[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        let depth = level[last];
        if depth <= best_depth {
            break;
        }
        best_depth = depth;
        // Among the deepest level pick the node of minimal degree.
        root = (0..n).filter(|&i| level[i] == depth).min_by_key(|&i| degree[i]).unwrap_or(last);
    }
    root
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn matches_dense_solve() {
        let n = 30;
        let mut d = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            d[(i, i)] = 4.0;
            for j in [i + 1, i + 7] {
                if j < n {
                    d[(i, j)] = -1.0;
                    d[(j, i)] = -1.0;
                }
            }
        }
        let a = SparseMatrix::from_dense(&d, true);
        let f = EnvelopeCholesky::new(&a).unwrap();
        let b = DVector::from_fn(n, |i, _| (i as f64).sin());
        let x = f.solve(&b);
        let r = &d * &x - &b;
        assert!(r.amax() < 1e-13);
    }

    #[test]
    fn indefinite_is_rejected() {
        let d = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(EnvelopeCholesky::new(&SparseMatrix::from_dense(&d, true)).is_err());
    }
}
