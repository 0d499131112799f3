use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

use crate::error::{Error, Result};

/// Compressed-row sparsity pattern, shared between matrices assembled on the same mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl Pattern {
    /// Builds a pattern from per-row column sets. Columns are sorted and deduplicated.
    pub fn from_rows(n: usize, mut rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        Pattern { n, row_ptr, col_idx }
    }

    /// Position of entry (i, j) in the value array.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        row.binary_search(&j).ok().map(|p| self.row_ptr[i] + p)
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }
}

/// Square sparse matrix in compressed-row storage.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    pub fn zeros(pattern: Arc<Pattern>, symmetric: bool) -> Self {
        let nnz = pattern.nnz();
        SparseMatrix { pattern, values: vec![0.0; nnz], symmetric }
    }

    /// Assembles from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)], symmetric: bool) -> Result<Self> {
        let mut rows = vec![Vec::new(); n];
        for &(i, j, _) in triplets {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!("triplet ({i}, {j}) outside dimension {n}")));
            }
            rows[i].push(j);
        }
        let pattern = Arc::new(Pattern::from_rows(n, rows));
        let mut m = SparseMatrix::zeros(pattern, symmetric);
        for &(i, j, v) in triplets {
            m.add_to(i, j, v);
        }
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        SparseMatrix::from_triplets(n, &triplets, true).expect("valid identity")
    }

    pub fn from_dense(a: &DMatrix<f64>, symmetric: bool) -> Self {
        let n = a.nrows();
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..a.ncols() {
                if a[(i, j)] != 0.0 {
                    triplets.push((i, j, a[(i, j)]));
                }
            }
        }
        SparseMatrix::from_triplets(n, &triplets, symmetric).expect("square dense input")
    }

    pub fn dim(&self) -> usize {
        self.pattern.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Adds `v` to entry (i, j). Panics if the entry is not part of the pattern.
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        let p = self.pattern.find(i, j).expect("entry outside sparsity pattern");
        self.values[p] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |p| self.values[p])
    }

    pub fn diagonal(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), (0..self.dim()).map(|i| self.get(i, i)))
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        let p = &*self.pattern;
        for i in 0..p.n {
            let mut acc = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                acc += self.values[k] * x[p.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.dim());
        self.mul_vec_into(x.as_slice(), y.as_mut_slice());
        y
    }

    /// Applies the matrix to every column of `x`.
    pub fn mul_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.dim(), x.ncols());
        for (xc, mut yc) in x.column_iter().zip(y.column_iter_mut()) {
            let xs: Vec<f64> = xc.iter().copied().collect();
            let mut ys = vec![0.0; self.dim()];
            self.mul_vec_into(&xs, &mut ys);
            yc.copy_from_slice(&ys);
        }
        y
    }

    /// xᵀ A y
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        let p = &*self.pattern;
        let mut acc = 0.0;
        for i in 0..p.n {
            let mut row = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                row += self.values[k] * y[p.col_idx[k]];
            }
            acc += x[i] * row;
        }
        acc
    }

    /// Projected matrix Vᵀ A W.
    pub fn project(&self, v: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
        v.transpose() * self.mul_mat(w)
    }

    /// Σ cᵢ Aᵢ over matrices sharing one sparsity pattern.
    pub fn linear_combination(terms: &[(f64, &SparseMatrix)]) -> Result<SparseMatrix> {
        let (_, first) = terms
            .first()
            .ok_or_else(|| Error::InvalidInput("empty linear combination".into()))?;
        let mut out = SparseMatrix::zeros(first.pattern.clone(), true);
        for (c, m) in terms {
            if !Arc::ptr_eq(&m.pattern, &first.pattern) && *m.pattern != *first.pattern {
                return Err(Error::DimensionMismatch("linear combination of different patterns".into()));
            }
            out.symmetric &= m.symmetric;
            for (o, v) in out.values.iter_mut().zip(&m.values) {
                *o += c * v;
            }
        }
        Ok(out)
    }

    pub fn scaled(&self, c: f64) -> SparseMatrix {
        SparseMatrix {
            pattern: self.pattern.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
            symmetric: self.symmetric,
        }
    }

    /// Principal submatrix on the listed indices (in the order given).
    pub fn restrict(&self, keep: &[usize]) -> SparseMatrix {
        let mut new_index = vec![usize::MAX; self.dim()];
        for (new, &old) in keep.iter().enumerate() {
            new_index[old] = new;
        }
        let p = &*self.pattern;
        let mut rows = Vec::with_capacity(keep.len());
        let mut vals = Vec::with_capacity(keep.len());
        for &old in keep {
            let mut r = Vec::new();
            let mut v = Vec::new();
            for k in p.row_ptr[old]..p.row_ptr[old + 1] {
                let j = new_index[p.col_idx[k]];
                if j != usize::MAX {
                    r.push(j);
                    v.push(self.values[k]);
                }
            }
            rows.push(r);
            vals.push(v);
        }
        // Rows are already sorted because `keep` is increasing in practice; Pattern sorts anyway,
        // so values are placed through `find`.
        let pattern = Arc::new(Pattern::from_rows(keep.len(), rows.clone()));
        let mut out = SparseMatrix::zeros(pattern, self.symmetric);
        for (i, (r, v)) in rows.iter().zip(&vals).enumerate() {
            for (&j, &x) in r.iter().zip(v) {
                out.add_to(i, j, x);
            }
        }
        out
    }

    /// Replaces the pattern handle by an equal, shared one so that linear
    /// combinations skip the structural comparison.
    pub fn share_pattern(&mut self, pattern: &Arc<Pattern>) {
        assert!(**pattern == *self.pattern, "patterns differ");
        self.pattern = pattern.clone();
    }

    /// Sum of all stored entries.
    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let p = &*self.pattern;
        let mut a = DMatrix::zeros(p.n, p.n);
        for i in 0..p.n {
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                a[(i, p.col_idx[k])] += self.values[k];
            }
        }
        a
    }

    /// Checks the structural invariants and, for symmetric matrices, entry symmetry.
    pub fn check_invariants(&self) -> Result<()> {
        let p = &*self.pattern;
        if p.row_ptr.len() != p.n + 1 || p.row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidInput("row offsets not monotone".into()));
        }
        if p.col_idx.iter().any(|&j| j >= p.n) {
            return Err(Error::InvalidInput("column index out of range".into()));
        }
        if self.symmetric {
            for i in 0..p.n {
                for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                    let j = p.col_idx[k];
                    let a = self.values[k];
                    let b = self.get(j, i);
                    if (a - b).abs() > 1e-14 * a.abs().max(b.abs()) {
                        return Err(Error::InvalidInput(format!("asymmetric entry ({i}, {j})")));
                    }
                }
            }
        }
        Ok(())
    }
}
