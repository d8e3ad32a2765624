use nalgebra::DMatrix;

use super::banded::BandedSym;
use crate::fields::Real;

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<T: Real = f64> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

/// Row-by-row builder; entries within a row may repeat and are summed.
#[derive(Debug)]
pub struct RowBuilder<T: Real = f64> {
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
    row: Vec<(usize, T)>,
}

impl<T: Real> RowBuilder<T> {
    pub fn new(ncols: usize) -> Self {
        Self {
            ncols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
            row: Vec::new(),
        }
    }

    pub fn push(&mut self, col: usize, val: T) {
        debug_assert!(col < self.ncols);
        if val != T::zero() {
            self.row.push((col, val));
        }
    }

    pub fn finish_row(&mut self) {
        self.row.sort_by_key(|e| e.0);
        let mut last: Option<usize> = None;
        for &(c, v) in &self.row {
            if last == Some(c) {
                let k = self.values.len() - 1;
                self.values[k] = self.values[k] + v;
            } else {
                self.indices.push(c);
                self.values.push(v);
                last = Some(c);
            }
        }
        self.row.clear();
        self.indptr.push(self.indices.len());
    }

    pub fn nrows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn build(self) -> SparseMatrix<T> {
        SparseMatrix {
            nrows: self.indptr.len() - 1,
            ncols: self.ncols,
            indptr: self.indptr,
            indices: self.indices,
            values: self.values,
        }
    }
}

impl<T: Real> SparseMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.row(i).find(|e| e.0 == j).map_or(T::zero(), |e| e.1)
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|i| self.row(i).fold(T::zero(), |acc, (j, v)| acc + v * x[j]))
            .collect()
    }

    /// Aᵀy.
    pub fn tr_mul_vec(&self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.nrows);
        let mut out = vec![T::zero(); self.ncols];
        for (i, &yi) in y.iter().enumerate() {
            for (j, v) in self.row(i) {
                out[j] = out[j] + v * yi;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![T::zero(); self.nnz()];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                let k = next[j];
                indices[k] = i;
                values[k] = v;
                next[j] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr: counts,
            indices,
            values,
        }
    }

    /// diag(left) · A · diag(right).
    pub fn scaled(&self, left: &[T], right: &[T]) -> Self {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                out.values[k] = left[i] * self.values[k] * right[self.indices[k]];
            }
        }
        out
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn vstack(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.ncols);
        let mut out = self.clone();
        let base = out.indices.len();
        out.indices.extend_from_slice(&other.indices);
        out.values.extend_from_slice(&other.values);
        out.indptr.extend(other.indptr[1..].iter().map(|p| p + base));
        out.nrows += other.nrows;
        out
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::from_element(self.nrows, self.ncols, T::zero());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Lower half-bandwidth of A·diag(w)·Aᵀ.
    fn gram_bandwidth(&self, by_col: &Self) -> usize {
        let mut bw = 0;
        for j in 0..by_col.nrows {
            let rows: Vec<usize> = by_col.row(j).map(|e| e.0).collect();
            if let (Some(lo), Some(hi)) = (rows.iter().min(), rows.iter().max()) {
                bw = bw.max(hi - lo);
            }
        }
        bw
    }

    /// A·diag(w)·Aᵀ in banded symmetric storage.
    pub fn weighted_gram(&self, w: &[T]) -> BandedSym<T> {
        assert_eq!(w.len(), self.ncols);
        let t = self.transpose();
        let bw = self.gram_bandwidth(&t);
        let mut g = BandedSym::zeros(self.nrows, bw);
        for j in 0..t.nrows {
            let col: Vec<(usize, T)> = t.row(j).collect();
            for (a, &(ra, va)) in col.iter().enumerate() {
                for &(rb, vb) in &col[..=a] {
                    let (hi, lo) = if ra >= rb { (ra, rb) } else { (rb, ra) };
                    g.add(hi, lo, va * vb * w[j]);
                }
            }
        }
        g
    }
}
