//! Compressed sparse row matrices and the few dense helpers the crate needs.
//!
//! Every graph shift operator in the crate is stored as a [`CsrMatrix`];
//! dense `nalgebra` matrices appear only for eigendecompositions and in test
//! oracles.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square sparse matrix in CSR layout with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// One stored entry, used for serialization and construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

impl CsrMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0; n + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds a matrix from unordered triplets. Duplicate coordinates are
    /// summed and exact zeros are dropped.
    pub fn from_triplets(n: usize, triplets: &[Triplet]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for t in triplets {
            if t.i >= n || t.j >= n {
                return Err(Error::dim(format!(
                    "triplet ({}, {}) outside {n}x{n} matrix",
                    t.i, t.j
                )));
            }
            rows[t.i].push((t.j, t.w));
        }
        Ok(Self::from_rows(rows))
    }

    pub(crate) fn from_rows(mut rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in rows.iter_mut() {
            row.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                let mut w = 0.0;
                while k < row.len() && row[k].0 == j {
                    w += row[k].1;
                    k += 1;
                }
                if w != 0.0 {
                    col_idx.push(j);
                    values.push(w);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::dim(format!(
                "expected square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| m[(i, j)] != 0.0)
                    .map(|j| (j, m[(i, j)]))
                    .collect()
            })
            .collect();
        Ok(Self::from_rows(rows))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of row `i` as `(column, value)` pairs in column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<Triplet> {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, w)| Triplet { i, j, w }))
            .collect()
    }

    /// `y = A x`
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        Ok(y)
    }

    pub(crate) fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let span = self.row_ptr[i]..self.row_ptr[i + 1];
            *yi = self.col_idx[span.clone()]
                .iter()
                .zip(&self.values[span])
                .map(|(&j, &w)| w * x[j])
                .sum();
        }
    }

    /// `y = Aᵀ x`
    pub fn matvec_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        let mut y = vec![0.0; self.n];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (j, w) in self.row(i) {
                y[j] += w * xi;
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for (j, w) in self.row(i) {
                rows[j].push((i, w));
            }
        }
        Self::from_rows(rows)
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `self + other`
    pub fn add(&self, other: &CsrMatrix) -> Result<Self> {
        self.sub(&other.scale(-1.0))
    }

    /// `self - other`, keeping only entries that do not cancel exactly.
    pub fn sub(&self, other: &CsrMatrix) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::dim(format!(
                "cannot subtract {}x{} from {}x{}",
                other.n, other.n, self.n, self.n
            )));
        }
        let rows = (0..self.n)
            .map(|i| {
                self.row(i)
                    .chain(other.row(i).map(|(j, w)| (j, -w)))
                    .collect()
            })
            .collect();
        Ok(Self::from_rows(rows))
    }

    /// Largest absolute difference between `A[i][j]` and `A[j][i]`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, w) in self.row(i) {
                worst = worst.max((w - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self) -> bool {
        self.max_asymmetry() == 0.0
    }

    pub fn diagonal_is_zero(&self) -> bool {
        (0..self.n).all(|i| self.get(i, i) == 0.0)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, w)| w).sum()).collect()
    }

    /// `P A Pᵀ` where `perm[i]` is the new index of old node `i`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        self.check_len(perm.len())?;
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for (j, w) in self.row(i) {
                rows[perm[i]].push((perm[j], w));
            }
        }
        Ok(Self::from_rows(rows))
    }

    /// Principal submatrix on `keep` (in the given order).
    pub fn submatrix(&self, keep: &[usize]) -> Self {
        let mut new_index = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            new_index[old] = new;
        }
        let rows = keep
            .iter()
            .map(|&old| {
                self.row(old)
                    .filter(|&(j, _)| new_index[j] != usize::MAX)
                    .map(|(j, w)| (new_index[j], w))
                    .collect()
            })
            .collect();
        Self::from_rows(rows)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, w) in self.row(i) {
                m[(i, j)] = w;
            }
        }
        m
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::dim(format!(
                "vector of length {len} for {}x{} matrix",
                self.n, self.n
            )));
        }
        Ok(())
    }
}

/// Spectral norm of a symmetric matrix, i.e. its largest absolute eigenvalue.
///
/// Rows and columns that are entirely zero do not change the nonzero part of
/// the spectrum, so the dense eigensolver only sees the supported block.
pub fn symmetric_spectral_norm(m: &CsrMatrix) -> f64 {
    let support: Vec<usize> = (0..m.n()).filter(|&i| m.row_nnz(i) > 0).collect();
    if support.is_empty() {
        return 0.0;
    }
    let block = m.submatrix(&support).to_dense();
    let block = (&block + block.transpose()) * 0.5;
    block
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Spectral norm of a symmetric matrix with nonnegative entries.
///
/// That norm is the Perron eigenvalue, found by power iteration from the
/// all-ones vector. Stops once the residual is below `1e-12` of the estimate;
/// falls back to [`symmetric_spectral_norm`] on negative entries or when the
/// iteration stalls (e.g. a bipartite spectrum symmetric about zero).
pub fn nonnegative_spectral_norm(m: &CsrMatrix) -> f64 {
    const MAX_ITERS: usize = 1000;
    const TOL: f64 = 1e-12;
    let n = m.n();
    if m.nnz() == 0 {
        return 0.0;
    }
    if m.values.iter().any(|&w| w < 0.0) {
        return symmetric_spectral_norm(m);
    }
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    for _ in 0..MAX_ITERS {
        let w = m.matvec(&v).expect("square matrix");
        let lambda = dot(&v, &w);
        let residual: f64 = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - lambda * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        if lambda > 0.0 && residual <= TOL * lambda {
            return lambda;
        }
        let norm = norm_sq(&w).sqrt();
        if norm == 0.0 {
            break;
        }
        v = w.into_iter().map(|x| x / norm).collect();
    }
    symmetric_spectral_norm(m)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}
