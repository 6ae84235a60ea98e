//! Compressed sparse row storage for real-valued matrices.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row-major sparse matrix with sorted column indices in every row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    data: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        nrows: usize,
        ncols: usize,
        indptr: Vec<usize>,
        indices: Vec<u32>,
        data: Vec<f64>,
    ) -> Result<Self> {
        if indptr.len() != nrows + 1 || indptr[0] != 0 {
            return Err(Error::param("indptr must have nrows + 1 entries starting at 0"));
        }
        if *indptr.last().unwrap() != indices.len() || indices.len() != data.len() {
            return Err(Error::param("indptr, indices and data lengths disagree"));
        }
        for r in 0..nrows {
            if indptr[r] > indptr[r + 1] {
                return Err(Error::param("indptr must be non-decreasing"));
            }
            let cols = &indices[indptr[r]..indptr[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::param(format!("row {r} has unsorted or duplicate columns")));
            }
            if cols.last().is_some_and(|&c| c as usize >= ncols) {
                return Err(Error::param(format!("row {r} has a column out of range")));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        })
    }

    /// Assembles a matrix from per-row `(column, value)` lists that are already sorted.
    pub(crate) fn from_sorted_rows(ncols: usize, rows: Vec<Vec<(u32, f64)>>) -> Self {
        let nrows = rows.len();
        let nnz = rows.iter().map(Vec::len).sum();
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut data = Vec::with_capacity(nnz);
        indptr.push(0);
        for row in rows {
            for (c, v) in row {
                indices.push(c);
                data.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn from_dense(dense: &Array2<f64>) -> Self {
        let rows = dense
            .outer_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(c, &v)| (c as u32, v))
                    .collect()
            })
            .collect();
        Self::from_sorted_rows(dense.ncols(), rows)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n as u32).collect(),
            data: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Fraction of stored entries relative to a dense matrix of the same shape.
    pub fn fill(&self) -> f64 {
        if self.nrows == 0 || self.ncols == 0 {
            return 0.0;
        }
        self.nnz() as f64 / (self.nrows as f64 * self.ncols as f64)
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[u32], &[f64]) {
        let span = self.indptr[r]..self.indptr[r + 1];
        (&self.indices[span.clone()], &self.data[span])
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.indptr[r + 1] - self.indptr[r]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&(c as u32)) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    pub fn row_norm_sq(&self, r: usize) -> f64 {
        self.row(r).1.iter().map(|v| v * v).sum()
    }

    /// Inner product of row `a` of `self` with row `b` of `other`.
    pub fn row_dot(&self, a: usize, other: &CsrMatrix, b: usize) -> f64 {
        let (ca, va) = self.row(a);
        let (cb, vb) = other.row(b);
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < ca.len() && j < cb.len() {
            match ca[i].cmp(&cb[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += va[i] * vb[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.nrows, self.ncols));
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out[[r, c as usize]] = v;
            }
        }
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c as usize + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let indptr = counts.clone();
        let mut cursor = counts;
        let mut indices = vec![0u32; self.nnz()];
        let mut data = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let slot = cursor[c as usize];
                indices[slot] = r as u32;
                data[slot] = v;
                cursor[c as usize] += 1;
            }
        }
        CsrMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr,
            indices,
            data,
        }
    }

    /// Sparse-times-dense product `self · rhs`.
    pub fn mul_dense(&self, rhs: &Array2<f64>) -> Result<Array2<f64>> {
        if rhs.nrows() != self.ncols {
            return Err(Error::param(format!(
                "operator has {} columns but the matrix has {} rows",
                self.ncols,
                rhs.nrows()
            )));
        }
        let width = rhs.ncols();
        let rows: Vec<Vec<f64>> = (0..self.nrows)
            .into_par_iter()
            .map(|r| {
                let mut acc = vec![0.0; width];
                let (cols, vals) = self.row(r);
                for (&c, &w) in cols.iter().zip(vals) {
                    for (a, &x) in acc.iter_mut().zip(rhs.row(c as usize)) {
                        *a += w * x;
                    }
                }
                acc
            })
            .collect();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Ok(Array2::from_shape_vec((self.nrows, width), flat).expect("shape matches"))
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Horizontal concatenation `[self, other]`.
    pub fn hstack(&self, other: &CsrMatrix) -> Result<CsrMatrix> {
        if self.nrows != other.nrows {
            return Err(Error::param("hstack requires equal row counts"));
        }
        let offset = self.ncols as u32;
        let rows = (0..self.nrows)
            .map(|r| {
                let (ca, va) = self.row(r);
                let (cb, vb) = other.row(r);
                ca.iter()
                    .copied()
                    .zip(va.iter().copied())
                    .chain(cb.iter().map(|&c| c + offset).zip(vb.iter().copied()))
                    .collect()
            })
            .collect();
        Ok(CsrMatrix::from_sorted_rows(self.ncols + other.ncols, rows))
    }
}

/// Dense scratch vector that remembers which slots were touched, for
/// assembling sparse rows as linear combinations of other sparse rows.
pub(crate) struct RowAccumulator {
    values: Vec<f64>,
    touched: Vec<u32>,
    seen: Vec<bool>,
}

impl RowAccumulator {
    pub fn new(width: usize) -> Self {
        Self {
            values: vec![0.0; width],
            touched: Vec::new(),
            seen: vec![false; width],
        }
    }

    #[inline]
    pub fn add(&mut self, col: u32, value: f64) {
        let c = col as usize;
        if !self.seen[c] {
            self.seen[c] = true;
            self.touched.push(col);
        }
        self.values[c] += value;
    }

    pub fn add_row(&mut self, cols: &[u32], vals: &[f64], weight: f64) {
        for (&c, &v) in cols.iter().zip(vals) {
            self.add(c, weight * v);
        }
    }

    /// Drains the accumulated entries as a sorted sparse row, dropping exact zeros.
    pub fn drain_sorted(&mut self) -> Vec<(u32, f64)> {
        self.touched.sort_unstable();
        let mut out = Vec::with_capacity(self.touched.len());
        for &c in &self.touched {
            let v = std::mem::take(&mut self.values[c as usize]);
            self.seen[c as usize] = false;
            if v != 0.0 {
                out.push((c, v));
            }
        }
        self.touched.clear();
        out
    }
}
