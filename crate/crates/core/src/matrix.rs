//! Node-embedding container shared by the aggregation, clustering and
//! evaluation stages.

use std::borrow::Cow;

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::Result;
use crate::ikernel::SparseBinaryMatrix;
use crate::sparse::CsrMatrix;

/// An `n x D` matrix of node embeddings.
#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingMatrix {
    /// Raw Isolation Kernel feature map output.
    Binary(SparseBinaryMatrix),
    /// Real-valued sparse rows, e.g. averaged feature maps.
    Sparse(CsrMatrix),
    Dense(Array2<f64>),
}

impl From<Array2<f64>> for EmbeddingMatrix {
    fn from(x: Array2<f64>) -> Self {
        EmbeddingMatrix::Dense(x)
    }
}

impl From<CsrMatrix> for EmbeddingMatrix {
    fn from(x: CsrMatrix) -> Self {
        EmbeddingMatrix::Sparse(x)
    }
}

impl From<SparseBinaryMatrix> for EmbeddingMatrix {
    fn from(x: SparseBinaryMatrix) -> Self {
        EmbeddingMatrix::Binary(x)
    }
}

impl EmbeddingMatrix {
    pub fn nrows(&self) -> usize {
        match self {
            Self::Binary(b) => b.nrows(),
            Self::Sparse(s) => s.nrows(),
            Self::Dense(d) => d.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Self::Binary(b) => b.ncols(),
            Self::Sparse(s) => s.ncols(),
            Self::Dense(d) => d.ncols(),
        }
    }

    /// Text export: dense rows as CSV lines, sparse rows as `row col value`
    /// triplets after an `nrows ncols nnz` line.
    pub fn text_lines(&self) -> Vec<String> {
        match self {
            Self::Dense(d) => d
                .outer_iter()
                .map(|r| r.iter().map(f64::to_string).collect::<Vec<_>>().join(","))
                .collect(),
            other => {
                let csr = other.to_csr();
                let mut lines = vec![format!("{} {} {}", csr.nrows(), csr.ncols(), csr.nnz())];
                for r in 0..csr.nrows() {
                    let (cols, vals) = csr.row(r);
                    lines.extend(cols.iter().zip(vals).map(|(c, v)| format!("{r} {c} {v}")));
                }
                lines
            }
        }
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        crate::graph::write_lines(path, self.text_lines().into_iter())
    }

    pub fn to_csr(&self) -> Cow<'_, CsrMatrix> {
        match self {
            Self::Binary(b) => Cow::Owned(b.to_csr()),
            Self::Sparse(s) => Cow::Borrowed(s),
            Self::Dense(d) => Cow::Owned(CsrMatrix::from_dense(d)),
        }
    }

    pub fn to_dense(&self) -> Cow<'_, Array2<f64>> {
        match self {
            Self::Dense(d) => Cow::Borrowed(d),
            Self::Sparse(s) => Cow::Owned(s.to_dense()),
            Self::Binary(b) => Cow::Owned(b.to_csr().to_dense()),
        }
    }

    /// Stored (or structurally non-zero) entries over the dense size.
    pub fn fill(&self) -> f64 {
        match self {
            Self::Binary(b) => 1.0 / b.psi() as f64,
            Self::Sparse(s) => s.fill(),
            Self::Dense(_) => 1.0,
        }
    }

    /// Converts sparse storage to dense once more than `threshold` of the
    /// entries are populated.
    pub fn densify_above(self, threshold: f64) -> Self {
        match self {
            Self::Sparse(s) if s.fill() > threshold => Self::Dense(s.to_dense()),
            other => other,
        }
    }

    pub fn row_dot(&self, i: usize, j: usize) -> f64 {
        match self {
            Self::Binary(b) => b.cells(i).iter().zip(b.cells(j)).filter(|(x, y)| x == y).count() as f64,
            Self::Sparse(s) => s.row_dot(i, s, j),
            Self::Dense(d) => d.row(i).dot(&d.row(j)),
        }
    }

    pub fn row_norm_sq(&self, i: usize) -> f64 {
        self.row_dot(i, i)
    }

    pub fn max_row_norm(&self) -> f64 {
        (0..self.nrows())
            .map(|i| self.row_norm_sq(i))
            .fold(0.0, f64::max)
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Self::Binary(_) => true,
            Self::Sparse(s) => s.values().iter().all(|v| v.is_finite()),
            Self::Dense(d) => d.iter().all(|v| v.is_finite()),
        }
    }

    pub fn has_negative(&self) -> bool {
        match self {
            Self::Binary(_) => false,
            Self::Sparse(s) => s.values().iter().any(|&v| v < 0.0),
            Self::Dense(d) => d.iter().any(|&v| v < 0.0),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            Self::Binary(b) => {
                let mut s = b.to_csr();
                s.scale(factor);
                Self::Sparse(s)
            }
            Self::Sparse(s) => {
                let mut s = s.clone();
                s.scale(factor);
                Self::Sparse(s)
            }
            Self::Dense(d) => Self::Dense(d * factor),
        }
    }

    /// Sum of the given rows as a dense vector.
    pub fn sum_rows(&self, rows: &[usize]) -> Vec<f64> {
        let mut acc = vec![0.0; self.ncols()];
        match self {
            Self::Binary(b) => {
                for &r in rows {
                    for c in b.active_columns(r) {
                        acc[c as usize] += 1.0;
                    }
                }
            }
            Self::Sparse(s) => {
                for &r in rows {
                    let (cols, vals) = s.row(r);
                    for (&c, &v) in cols.iter().zip(vals) {
                        acc[c as usize] += v;
                    }
                }
            }
            Self::Dense(d) => {
                for &r in rows {
                    for (a, &v) in acc.iter_mut().zip(d.row(r)) {
                        *a += v;
                    }
                }
            }
        }
        acc
    }

    /// Linear-kernel Gram matrix `E E^T`.
    pub fn gram(&self) -> Array2<f64> {
        match self {
            Self::Dense(d) => d.dot(&d.t()),
            other => {
                let csr = other.to_csr();
                sparse_gram(&csr)
            }
        }
    }

    /// Returns a copy with every non-zero row scaled to unit Euclidean norm.
    pub fn row_normalized(&self) -> Self {
        let norms: Vec<f64> = (0..self.nrows()).map(|i| self.row_norm_sq(i).sqrt()).collect();
        let inv = |i: usize| if norms[i] > 0.0 { 1.0 / norms[i] } else { 0.0 };
        match self {
            Self::Dense(d) => {
                let mut out = d.clone();
                for (i, mut row) in out.outer_iter_mut().enumerate() {
                    row *= inv(i);
                }
                Self::Dense(out)
            }
            other => {
                let csr = other.to_csr();
                let rows = (0..csr.nrows())
                    .map(|i| {
                        let (c, v) = csr.row(i);
                        c.iter().copied().zip(v.iter().map(|x| x * inv(i))).collect()
                    })
                    .collect();
                Self::Sparse(CsrMatrix::from_sorted_rows(csr.ncols(), rows))
            }
        }
    }
}

fn sparse_gram(x: &CsrMatrix) -> Array2<f64> {
    let n = x.nrows();
    let by_col = x.transpose();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0.0; n];
            let (cols, vals) = x.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let (others, ws) = by_col.row(c as usize);
                for (&j, &w) in others.iter().zip(ws) {
                    acc[j as usize] += v * w;
                }
            }
            acc
        })
        .collect();
    Array2::from_shape_vec((n, n), rows.into_iter().flatten().collect()).expect("n x n")
}
