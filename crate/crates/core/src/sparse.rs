//! Symmetric sparse matrices in compressed row form, plus the graph
//! operators built from them: degree vector, normalized Laplacian,
//! augmented propagation matrix, and the high-pass operator.
//!
//! All operators are immutable after construction and safe to share
//! across threads. `spmm` accumulates each output row in a fixed
//! (column-sorted) order so results do not depend on scheduling.

use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView2};
use std::collections::BTreeMap;

/// Entries closer to zero than this are dropped during construction.
const ZERO_TOL: f64 = 1e-12;

/// Symmetric real sparse matrix, CSR layout with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    /// Build from (row, col, value) entries. Each undirected pair may be
    /// given once or twice; mirrored duplicates must agree within 1e-12.
    pub fn from_entries(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(i, j, v) in entries {
            if i >= n || j >= n {
                return Err(Error::IndexOutOfRange(format!(
                    "entry ({i},{j}) outside {n}x{n} matrix"
                )));
            }
            for key in [(i, j), (j, i)] {
                match map.get(&key) {
                    Some(&old) if (old - v).abs() > ZERO_TOL => {
                        return Err(Error::NotSymmetric(format!(
                            "entry {key:?} given as both {old} and {v}"
                        )));
                    }
                    _ => {
                        map.insert(key, v);
                    }
                }
            }
        }
        let mut row_offsets = vec![0usize; n + 1];
        let mut col_indices = Vec::with_capacity(map.len());
        let mut values = Vec::with_capacity(map.len());
        for (&(i, j), &v) in &map {
            if v.abs() <= ZERO_TOL {
                continue;
            }
            row_offsets[i + 1] += 1;
            col_indices.push(j);
            values.push(v);
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(Self {
            n,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            row_offsets: vec![0; n + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entry (i, j); zero when absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        match self.col_indices[lo..hi].binary_search(&j) {
            Ok(pos) => self.values[lo + pos],
            Err(_) => 0.0,
        }
    }

    /// Iterate the stored entries of row i as (col, value).
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        self.col_indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    /// Row sums d_i = sum_j A_ij.
    pub fn degree_vector(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            d[i] = self.row(i).map(|(_, v)| v).sum();
        }
        d
    }

    /// Normalized Laplacian L = I - D^{-1/2} A D^{-1/2}.
    ///
    /// Rows of isolated nodes (degree 0) reduce to the identity diagonal
    /// entry, which keeps the spectrum inside [0, 2].
    pub fn normalized_laplacian(&self) -> Self {
        let deg = self.degree_vector();
        let inv_sqrt: Vec<f64> = deg
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        let mut entries = Vec::with_capacity(self.nnz() + self.n);
        for i in 0..self.n {
            let mut diag = 1.0;
            for (j, v) in self.row(i) {
                if j == i {
                    diag -= v * inv_sqrt[i] * inv_sqrt[i];
                } else if j > i {
                    entries.push((i, j, -v * inv_sqrt[i] * inv_sqrt[j]));
                }
            }
            entries.push((i, i, diag));
        }
        Self::from_entries(self.n, &entries).expect("laplacian entries are consistent")
    }

    /// Augmented propagation matrix of a GCN layer:
    /// A_hat = D~^{-1/2} (A + I) D~^{-1/2} with D~ = D + I.
    pub fn augmented_propagation(&self) -> Self {
        let deg = self.degree_vector();
        // A~ = A + I adds exactly 1 to each row sum.
        let inv_sqrt: Vec<f64> = deg.iter().map(|&d| 1.0 / (d + 1.0).sqrt()).collect();
        let mut entries = Vec::with_capacity(self.nnz() + self.n);
        for i in 0..self.n {
            let mut diag = 1.0; // the added self-loop
            for (j, v) in self.row(i) {
                if j == i {
                    diag += v;
                } else if j > i {
                    entries.push((i, j, v * inv_sqrt[i] * inv_sqrt[j]));
                }
            }
            entries.push((i, i, diag * inv_sqrt[i] * inv_sqrt[i]));
        }
        Self::from_entries(self.n, &entries).expect("propagation entries are consistent")
    }

    /// High-pass operator D^{-1/2} (D - A) D^{-1/2}.
    ///
    /// Algebraically identical to [`Self::normalized_laplacian`]; kept as a
    /// named operator because it is what gets applied to negative-feedback
    /// subgraphs in the encoder.
    pub fn high_pass_operator(&self) -> Self {
        self.normalized_laplacian()
    }

    /// Sparse-dense product M * X for X of shape [n, d].
    pub fn spmm(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "spmm: matrix is {}x{} but X has {} rows",
                self.n,
                self.n,
                x.nrows()
            )));
        }
        let d = x.ncols();
        let mut out = Array2::<f64>::zeros((self.n, d));
        for i in 0..self.n {
            let mut row = out.row_mut(i);
            for (j, v) in self.row(i) {
                let xj = x.row(j);
                for k in 0..d {
                    row[k] += v * xj[k];
                }
            }
        }
        Ok(out)
    }

    /// Sparse matrix-vector product M * x.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "spmv: matrix is {}x{} but x has length {}",
                self.n,
                self.n,
                x.len()
            )));
        }
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            out[i] = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::<f64>::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[[i, j]] = v;
            }
        }
        m
    }

    /// Check structural symmetry, sorted columns, and monotone offsets.
    pub fn validate(&self) -> Result<()> {
        if self.row_offsets.len() != self.n + 1 || self.row_offsets[self.n] != self.values.len() {
            return Err(Error::DimensionMismatch("row offsets malformed".into()));
        }
        for i in 0..self.n {
            if self.row_offsets[i] > self.row_offsets[i + 1] {
                return Err(Error::DimensionMismatch("row offsets not monotone".into()));
            }
            let mut prev: Option<usize> = None;
            for (j, v) in self.row(i) {
                if let Some(p) = prev {
                    if j <= p {
                        return Err(Error::DimensionMismatch(format!(
                            "row {i} columns not sorted"
                        )));
                    }
                }
                prev = Some(j);
                if (self.get(j, i) - v).abs() > ZERO_TOL {
                    return Err(Error::NotSymmetric(format!(
                        "({i},{j})={v} vs ({j},{i})={}",
                        self.get(j, i)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Quadratic form x' M x.
pub fn quadratic_form(m: &SparseSymMatrix, x: &[f64]) -> Result<f64> {
    let mx = m.spmv(x)?;
    Ok(x.iter().zip(mx.iter()).map(|(a, b)| a * b).sum())
}
