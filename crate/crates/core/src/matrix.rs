//! Compressed sparse row storage for transition and tilted matrices.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Square matrix in CSR form. Column indices within a row are strictly
/// increasing and explicit zeros are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut builder = Builder::with_capacity(dim, dim * 2);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Structure(alloc::format!(
                    "row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                builder.push(j, v);
            }
            builder.finish_row();
        }
        Ok(builder.build())
    }

    pub fn identity(dim: usize) -> Self {
        SparseMatrix {
            dim,
            row_ptr: (0..=dim).collect(),
            cols: (0..dim).collect(),
            vals: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Non-zero entries of row `i` as `(column, value)` pairs.
    pub fn row(&self, i: usize) -> impl ExactSizeIterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[span.clone()].binary_search(&j) {
            Ok(k) => self.vals[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| {
                let mut row = vec![0.0; self.dim];
                for (j, v) in self.row(i) {
                    row[j] = v;
                }
                row
            })
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.dim + 1];
        for &j in &self.cols {
            counts[j + 1] += 1;
        }
        for k in 0..self.dim {
            counts[k + 1] += counts[k];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut cols = vec![0; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                let slot = next[j];
                cols[slot] = i;
                vals[slot] = v;
                next[j] += 1;
            }
        }
        SparseMatrix {
            dim: self.dim,
            row_ptr,
            cols,
            vals,
        }
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, out) in y.iter_mut().enumerate().take(self.dim) {
            *out = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `y = xᵀ A` (row vector times matrix).
    pub fn vec_mul(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (i, &xi) in x.iter().enumerate().take(self.dim) {
            if xi != 0.0 {
                for (j, v) in self.row(i) {
                    y[j] += xi * v;
                }
            }
        }
    }

    /// Same sparsity pattern with every entry of row `i` multiplied by `scale[i]`.
    pub fn scale_rows(&self, scale: &[f64]) -> Self {
        let mut out = self.clone();
        for (i, &s) in scale.iter().enumerate().take(self.dim) {
            for v in &mut out.vals[self.row_ptr[i]..self.row_ptr[i + 1]] {
                *v *= s;
            }
        }
        out
    }

    /// Applies `f(row, col, value)` to each stored entry.
    pub fn map_entries(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.dim {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.vals[k] = f(i, self.cols[k], self.vals[k]);
            }
        }
        out
    }

    pub fn values(&self) -> &[f64] {
        &self.vals
    }
}

/// Row-by-row constructor. Columns must be pushed in increasing order.
#[derive(Debug, Default)]
pub struct Builder {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Builder {
    pub fn with_capacity(dim: usize, nnz: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(dim + 1);
        row_ptr.push(0);
        Builder {
            dim,
            row_ptr,
            cols: Vec::with_capacity(nnz),
            vals: Vec::with_capacity(nnz),
        }
    }

    pub fn push(&mut self, col: usize, value: f64) {
        if value != 0.0 {
            debug_assert!(col < self.dim);
            debug_assert!(
                self.cols.len() == *self.row_ptr.last().unwrap()
                    || *self.cols.last().unwrap() < col
            );
            self.cols.push(col);
            self.vals.push(value);
        }
    }

    pub fn finish_row(&mut self) {
        self.row_ptr.push(self.cols.len());
    }

    pub fn build(self) -> SparseMatrix {
        assert_eq!(self.row_ptr.len(), self.dim + 1, "unfinished rows");
        SparseMatrix {
            dim: self.dim,
            row_ptr: self.row_ptr,
            cols: self.cols,
            vals: self.vals,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_round_trip_and_transpose() {
        let dense = vec![
            vec![0.0, 2.0, 0.0],
            vec![1.0, 0.0, 3.0],
            vec![0.0, 0.0, 4.0],
        ];
        let m = SparseMatrix::from_dense(&dense).unwrap();
        assert_eq!(m.nnz(), 4);
        assert_eq!(m.to_dense(), dense);
        let t = m.transpose();
        assert_eq!(t.get(1, 0), 2.0);
        assert_eq!(t.get(2, 1), 3.0);
        assert_eq!(t.transpose(), m);
    }

    #[test]
    fn products() {
        let m = SparseMatrix::from_dense(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let mut y = [0.0; 2];
        m.mul_vec(&[1.0, 1.0], &mut y);
        assert_eq!(y, [3.0, 7.0]);
        m.vec_mul(&[1.0, 1.0], &mut y);
        assert_eq!(y, [4.0, 6.0]);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(SparseMatrix::from_dense(&[vec![1.0], vec![0.0, 1.0]]).is_err());
    }
}
