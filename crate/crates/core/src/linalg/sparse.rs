use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest virtual size (`rows * cols`) a Kronecker product may produce by default.
pub const DEFAULT_KRON_CAP: u128 = 100_000_000;

/// Sparse linear map stored in compressed-row form with sorted, unique column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseOperator {
    /// Builds an operator from `(row, col, value)` triplets. Duplicates are summed and exact
    /// zeros dropped, so the stored entries are unique and canonically ordered.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        for &(r, c, _) in &triplets {
            if r >= rows || c >= cols {
                return Err(Error::IndexOutOfRange {
                    row: r,
                    col: c,
                    rows,
                    cols,
                });
            }
        }
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        let mut rows_of: Vec<usize> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                rows_of.push(r);
                col_idx.push(c);
                vals.push(v);
                last = Some((r, c));
            }
        }
        let mut keep_cols = Vec::with_capacity(col_idx.len());
        let mut keep_vals = Vec::with_capacity(vals.len());
        for ((r, c), v) in rows_of.into_iter().zip(col_idx).zip(vals) {
            if v != 0.0 {
                row_ptr[r + 1] += 1;
                keep_cols.push(c);
                keep_vals.push(v);
            }
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx: keep_cols,
            vals: keep_vals,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            vals: vec![1.0; n],
        }
    }

    /// Coordinate selection: row `k` picks coordinate `indices[k]` of a `cols`-vector.
    pub fn selection(indices: &[usize], cols: usize) -> Result<Self> {
        let triplets = indices.iter().enumerate().map(|(r, &c)| (r, c, 1.0)).collect();
        Self::from_triplets(indices.len(), cols, triplets)
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut triplets = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), triplets).expect("indices in range")
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.entries() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Number of entries a dense copy would hold.
    pub fn virtual_size(&self) -> u128 {
        self.rows as u128 * self.cols as u128
    }

    /// Entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.vals[k]))
        })
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.vals[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "operator has {} columns, vector has length {}",
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect())
    }

    /// Computes `selfᵀ · y` without forming the transpose.
    pub fn tr_mul_vec(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "operator has {} rows, vector has length {}",
                self.rows,
                y.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out[c] += v * yr;
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        let triplets = self.entries().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.cols, self.rows, triplets).expect("indices in range")
    }

    pub fn matmul(&self, other: &SparseOperator) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut triplets = Vec::new();
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&k, &a) in cols.iter().zip(vals) {
                let (ocols, ovals) = other.row(k);
                for (&c, &b) in ocols.iter().zip(ovals) {
                    triplets.push((r, c, a * b));
                }
            }
        }
        Self::from_triplets(self.rows, other.cols, triplets)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        if s == 0.0 {
            return Self::zeros(self.rows, self.cols);
        }
        out
    }

    pub fn add(&self, other: &SparseOperator) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "cannot add {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let triplets = self.entries().chain(other.entries()).collect();
        Self::from_triplets(self.rows, self.cols, triplets)
    }

    pub fn sub(&self, other: &SparseOperator) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.vals.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Block-diagonal operator with `blocks` along the diagonal in order.
    pub fn block_diag(blocks: &[SparseOperator]) -> Self {
        let rows = blocks.iter().map(|b| b.rows).sum();
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut triplets = Vec::with_capacity(blocks.iter().map(|b| b.nnz()).sum());
        let (mut r0, mut c0) = (0, 0);
        for b in blocks {
            triplets.extend(b.entries().map(|(r, c, v)| (r + r0, c + c0, v)));
            r0 += b.rows;
            c0 += b.cols;
        }
        Self::from_triplets(rows, cols, triplets).expect("indices in range")
    }

    /// Stacks operators with equal column counts on top of each other.
    pub fn vstack(blocks: &[SparseOperator]) -> Result<Self> {
        let cols = blocks.first().map(|b| b.cols).unwrap_or(0);
        if blocks.iter().any(|b| b.cols != cols) {
            return Err(Error::DimensionMismatch(
                "vstack requires equal column counts".into(),
            ));
        }
        let rows = blocks.iter().map(|b| b.rows).sum();
        let mut triplets = Vec::new();
        let mut r0 = 0;
        for b in blocks {
            triplets.extend(b.entries().map(|(r, c, v)| (r + r0, c, v)));
            r0 += b.rows;
        }
        Self::from_triplets(rows, cols, triplets)
    }

    /// `I_left ⊗ self ⊗ I_right`, built directly from the nonzeros so the cost is
    /// proportional to `left * right * nnz` regardless of the virtual size.
    pub fn sandwich_identity(&self, left: usize, right: usize) -> Self {
        let rows = left * self.rows * right;
        let cols = left * self.cols * right;
        let mut triplets = Vec::with_capacity(left * right * self.nnz());
        for l in 0..left {
            for (r, c, v) in self.entries() {
                let rb = (l * self.rows + r) * right;
                let cb = (l * self.cols + c) * right;
                for k in 0..right {
                    triplets.push((rb + k, cb + k, v));
                }
            }
        }
        Self::from_triplets(rows, cols, triplets).expect("indices in range")
    }
}

/// Kronecker product with the default virtual-size cap.
pub fn kron(a: &SparseOperator, b: &SparseOperator) -> Result<SparseOperator> {
    kron_capped(a, b, DEFAULT_KRON_CAP)
}

/// Kronecker product; entry `(i*rows_b + k, j*cols_b + l)` equals `a[i,j] * b[k,l]`.
pub fn kron_capped(a: &SparseOperator, b: &SparseOperator, cap: u128) -> Result<SparseOperator> {
    let rows = a.rows as u128 * b.rows as u128;
    let cols = a.cols as u128 * b.cols as u128;
    let requested = rows.saturating_mul(cols);
    if requested > cap {
        return Err(Error::SizeCap { requested, cap });
    }
    let mut triplets = Vec::with_capacity(a.nnz() * b.nnz());
    for (i, j, va) in a.entries() {
        for (k, l, vb) in b.entries() {
            triplets.push((i * b.rows + k, j * b.cols + l, va * vb));
        }
    }
    SparseOperator::from_triplets(rows as usize, cols as usize, triplets)
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVec {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseVec {
    pub fn from_dense(x: &[f64]) -> Self {
        let mut out = SparseVec::default();
        for (i, &v) in x.iter().enumerate() {
            if v != 0.0 {
                out.idx.push(i);
                out.val.push(v);
            }
        }
        out
    }

    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut x = vec![0.0; len];
        for (&i, &v) in self.idx.iter().zip(&self.val) {
            x[i] = v;
        }
        x
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }

    pub fn norm(&self) -> f64 {
        self.val.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot_dense(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, &v)| v * x[i]).sum()
    }

    pub fn dot(&self, other: &SparseVec) -> f64 {
        let (mut a, mut b, mut acc) = (0, 0, 0.0);
        while a < self.idx.len() && b < other.idx.len() {
            match self.idx[a].cmp(&other.idx[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.val[a] * other.val[b];
                    a += 1;
                    b += 1;
                }
            }
        }
        acc
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx.iter().copied().zip(self.val.iter().copied())
    }
}
