//! Compressed sparse row matrices over a shared sparsity pattern.

use std::sync::{Arc, OnceLock};

use faer::sparse::linalg::solvers::{SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};

/// Row-compressed sparsity structure. Column indices are sorted within rows.
#[derive(Debug)]
pub struct Pattern {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    symbolic_lu: OnceLock<SymbolicLu<usize>>,
    symbolic_llt: OnceLock<SymbolicLlt<usize>>,
}

impl Pattern {
    pub fn from_rows(n_cols: usize, mut rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        Pattern {
            n_rows: rows.len(),
            n_cols,
            row_ptr,
            col_idx,
            symbolic_lu: OnceLock::new(),
            symbolic_llt: OnceLock::new(),
        }
    }

    /// Pattern of a finite-element operator: every pair of dofs sharing a cell.
    pub fn from_cells<'a>(n_dofs: usize, cells: impl Iterator<Item = &'a [usize]>) -> Self {
        let mut rows = vec![Vec::new(); n_dofs];
        for dofs in cells {
            for &r in dofs {
                rows[r].extend_from_slice(dofs);
            }
        }
        Pattern::from_rows(n_dofs, rows)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    /// Position of entry `(r, c)` in the value array.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        let start = self.row_ptr[r];
        self.row(r).binary_search(&c).ok().map(|k| start + k)
    }

    /// The pattern read as column-compressed, i.e. the transpose structure.
    pub(crate) fn as_transposed_csc(&self) -> SymbolicSparseColMatRef<'_, usize> {
        SymbolicSparseColMatRef::new_checked(self.n_cols, self.n_rows, &self.row_ptr, None, &self.col_idx)
    }

    pub(crate) fn symbolic_lu(&self) -> Option<SymbolicLu<usize>> {
        if let Some(s) = self.symbolic_lu.get() {
            return Some(s.clone());
        }
        let s = SymbolicLu::try_new(self.as_transposed_csc()).ok()?;
        Some(self.symbolic_lu.get_or_init(|| s).clone())
    }

    pub(crate) fn symbolic_llt(&self) -> Option<SymbolicLlt<usize>> {
        if let Some(s) = self.symbolic_llt.get() {
            return Some(s.clone());
        }
        let s = SymbolicLlt::try_new(self.as_transposed_csc(), faer::Side::Lower).ok()?;
        Some(self.symbolic_llt.get_or_init(|| s).clone())
    }
}

/// Sparse matrix in CSR layout.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let nnz = pattern.nnz();
        CsrMatrix { pattern, values: vec![0.0; nnz] }
    }

    pub fn from_parts(pattern: Arc<Pattern>, values: Vec<f64>) -> Self {
        assert_eq!(pattern.nnz(), values.len());
        CsrMatrix { pattern, values }
    }

    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows = vec![Vec::new(); n_rows];
        for &(r, c, _) in triplets {
            rows[r].push(c);
        }
        let pattern = Arc::new(Pattern::from_rows(n_cols, rows));
        let mut m = CsrMatrix::zeros(pattern);
        for &(r, c, v) in triplets {
            m.add(r, c, v);
        }
        m
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 || i == j {
                    triplets.push((i, j, v));
                }
            }
        }
        CsrMatrix::from_triplets(rows.len(), n_cols, &triplets)
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        CsrMatrix::from_triplets(n, n, &t)
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn n_rows(&self) -> usize {
        self.pattern.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.pattern.n_cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Adds to an entry that must exist in the pattern.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let k = self
            .pattern
            .position(r, c)
            .unwrap_or_else(|| panic!("entry ({r}, {c}) is outside the sparsity pattern"));
        self.values[k] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pattern.position(r, c).map_or(0.0, |k| self.values[k])
    }

    /// Scatters a dense local matrix (row-major, `dofs.len()` squared).
    pub fn add_local(&mut self, dofs: &[usize], local: &[f64]) {
        let n = dofs.len();
        for (i, &r) in dofs.iter().enumerate() {
            let start = self.pattern.row_ptr[r];
            let row = self.pattern.row(r);
            for (j, &c) in dofs.iter().enumerate() {
                let v = local[i * n + j];
                if v != 0.0 {
                    let k = row.binary_search(&c).expect("local entry outside the sparsity pattern");
                    self.values[start + k] += v;
                }
            }
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols());
        (0..self.n_rows())
            .map(|r| {
                let s = self.pattern.row_ptr[r];
                self.pattern
                    .row(r)
                    .iter()
                    .zip(&self.values[s..])
                    .map(|(&c, &v)| v * x[c])
                    .sum()
            })
            .collect()
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_rows());
        let mut y = vec![0.0; self.n_cols()];
        for (r, &xr) in x.iter().enumerate() {
            let s = self.pattern.row_ptr[r];
            for (&c, &v) in self.pattern.row(r).iter().zip(&self.values[s..]) {
                y[c] += v * xr;
            }
        }
        y
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    /// Explicit transpose with its own pattern.
    pub fn transpose(&self) -> CsrMatrix {
        let mut t = Vec::with_capacity(self.values.len());
        for r in 0..self.n_rows() {
            let s = self.pattern.row_ptr[r];
            for (&c, &v) in self.pattern.row(r).iter().zip(&self.values[s..]) {
                t.push((c, r, v));
            }
        }
        CsrMatrix::from_triplets(self.n_cols(), self.n_rows(), &t)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols()]; self.n_rows()];
        for (r, row) in d.iter_mut().enumerate() {
            let s = self.pattern.row_ptr[r];
            for (&c, &v) in self.pattern.row(r).iter().zip(&self.values[s..]) {
                row[c] += v;
            }
        }
        d
    }

    /// View of the transpose as a faer column-major matrix.
    pub(crate) fn as_transposed_faer(&self) -> SparseColMatRef<'_, usize, f64> {
        SparseColMatRef::new(self.pattern.as_transposed_csc(), &self.values)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0)]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.get(1, 0), 4.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.matvec(&[1.0, 1.0]), vec![3.0, 4.0]);
        assert_eq!(m.matvec_transpose(&[1.0, 1.0]), vec![7.0, 0.0]);
    }

    #[test]
    fn transpose_matches_transpose_product() {
        let m = CsrMatrix::from_dense(&[vec![1.0, 2.0, 0.0], vec![0.0, 3.0, 4.0], vec![5.0, 0.0, 6.0]]);
        let x = [1.0, -2.0, 0.5];
        assert_eq!(m.transpose().matvec(&x), m.matvec_transpose(&x));
    }
}
