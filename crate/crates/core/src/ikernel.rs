//! Isolation Kernel built from random Voronoi tessellations, plus the
//! Gaussian kernel used as a data-independent baseline.
//!
//! A model holds `t` independent samples of `psi` reference points. Each
//! sample induces a Voronoi partition of the space; a point is mapped to the
//! one-hot indicator of its nearest reference in every partition, giving a
//! binary feature vector of length `t * psi` with exactly `t` ones. The
//! kernel value of two points is the fraction of partitions in which they
//! share a cell.

use ndarray::{s, Array2, ArrayView2};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::EmbeddingMatrix;
use crate::sparse::CsrMatrix;

pub const DEFAULT_T: usize = 100;
pub const DEFAULT_PSI: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IKConfig {
    /// Reference points per tessellation.
    pub psi: usize,
    /// Number of tessellations.
    #[serde(default = "default_t")]
    pub t: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_t() -> usize {
    DEFAULT_T
}

impl Default for IKConfig {
    fn default() -> Self {
        Self {
            psi: DEFAULT_PSI,
            t: DEFAULT_T,
            seed: 0,
        }
    }
}

impl IKConfig {
    pub fn new(psi: usize, t: usize, seed: u64) -> Self {
        Self { psi, t, seed }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

#[derive(Debug, Clone)]
enum References {
    Dense(Array2<f64>),
    /// Reference rows plus their transpose, which serves as an inverted
    /// index from feature column to the references using it.
    Sparse { rows: CsrMatrix, by_column: CsrMatrix },
}

/// A fitted Isolation Kernel: `t` reference sets of `psi` rows each.
#[derive(Debug, Clone)]
pub struct IKModel {
    reference_sets: Vec<Vec<usize>>,
    references: References,
    norms_sq: Vec<f64>,
    dim: usize,
    psi: usize,
}

impl IKModel {
    /// Draws `t` independent uniform samples without replacement of `psi`
    /// rows from `data`.
    pub fn fit(data: &EmbeddingMatrix, cfg: &IKConfig) -> Result<Self> {
        let n = data.nrows();
        if cfg.psi == 0 || cfg.t == 0 {
            return Err(Error::param("psi and t must be at least 1"));
        }
        if n < cfg.psi {
            return Err(Error::param(format!(
                "cannot draw psi = {} references from {} rows",
                cfg.psi, n
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let reference_sets: Vec<Vec<usize>> = (0..cfg.t)
            .map(|_| index::sample(&mut rng, n, cfg.psi).into_vec())
            .collect();
        let flat: Vec<usize> = reference_sets.iter().flatten().copied().collect();

        let references = match data {
            EmbeddingMatrix::Dense(x) => References::Dense(x.select(ndarray::Axis(0), &flat)),
            other => {
                let csr = other.to_csr();
                let rows = flat
                    .iter()
                    .map(|&r| {
                        let (c, v) = csr.row(r);
                        c.iter().copied().zip(v.iter().copied()).collect()
                    })
                    .collect();
                let rows = CsrMatrix::from_sorted_rows(csr.ncols(), rows);
                let by_column = rows.transpose();
                References::Sparse { rows, by_column }
            }
        };
        let norms_sq = match &references {
            References::Dense(r) => r.outer_iter().map(|row| row.dot(&row)).collect(),
            References::Sparse { rows, .. } => (0..rows.nrows()).map(|i| rows.row_norm_sq(i)).collect(),
        };
        Ok(Self {
            reference_sets,
            references,
            norms_sq,
            dim: data.ncols(),
            psi: cfg.psi,
        })
    }

    pub fn fit_dense(data: &Array2<f64>, cfg: &IKConfig) -> Result<Self> {
        Self::fit(&EmbeddingMatrix::Dense(data.clone()), cfg)
    }

    pub fn psi(&self) -> usize {
        self.psi
    }

    pub fn t(&self) -> usize {
        self.reference_sets.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row indices (into the fitting data) of each tessellation's references.
    pub fn reference_sets(&self) -> &[Vec<usize>] {
        &self.reference_sets
    }

    /// Maps every row of `data` to its nearest reference (Euclidean) in each
    /// tessellation. Ties go to the lowest reference index.
    pub fn transform(&self, data: &EmbeddingMatrix) -> Result<SparseBinaryMatrix> {
        if data.ncols() != self.dim {
            return Err(Error::param(format!(
                "model was fitted on {} dimensions but data has {}",
                self.dim,
                data.ncols()
            )));
        }
        let t = self.t();
        let mut cells = vec![0u32; data.nrows() * t];
        match (&self.references, data) {
            (References::Dense(refs), EmbeddingMatrix::Dense(x)) => {
                self.assign_dense(refs, x.view(), &mut cells)
            }
            (References::Dense(refs), other) => {
                let refs_t = refs.t().as_standard_layout().to_owned();
                let csr = other.to_csr();
                cells.par_chunks_mut(t).enumerate().for_each_init(
                    || vec![0.0; refs.nrows()],
                    |acc, (r, out)| {
                        acc.fill(0.0);
                        let (cols, vals) = csr.row(r);
                        for (&c, &x) in cols.iter().zip(vals) {
                            for (a, &w) in acc.iter_mut().zip(refs_t.row(c as usize)) {
                                *a += x * w;
                            }
                        }
                        self.pick_cells(acc, out);
                    },
                );
            }
            (References::Sparse { by_column, .. }, EmbeddingMatrix::Dense(x)) => {
                cells.par_chunks_mut(t).enumerate().for_each_init(
                    || vec![0.0; by_column.ncols()],
                    |acc, (r, out)| {
                        acc.fill(0.0);
                        for (c, &xv) in x.row(r).iter().enumerate() {
                            if xv != 0.0 {
                                let (slots, vals) = by_column.row(c);
                                for (&s, &v) in slots.iter().zip(vals) {
                                    acc[s as usize] += xv * v;
                                }
                            }
                        }
                        self.pick_cells(acc, out);
                    },
                );
            }
            (References::Sparse { by_column, .. }, other) => {
                let csr = other.to_csr();
                cells.par_chunks_mut(t).enumerate().for_each_init(
                    || vec![0.0; by_column.ncols()],
                    |acc, (r, out)| {
                        acc.fill(0.0);
                        let (cols, xs) = csr.row(r);
                        for (&c, &xv) in cols.iter().zip(xs) {
                            let (slots, vals) = by_column.row(c as usize);
                            for (&s, &v) in slots.iter().zip(vals) {
                                acc[s as usize] += xv * v;
                            }
                        }
                        self.pick_cells(acc, out);
                    },
                );
            }
        }
        Ok(SparseBinaryMatrix {
            nrows: data.nrows(),
            t,
            psi: self.psi,
            cells,
        })
    }

    pub fn transform_dense(&self, data: &Array2<f64>) -> Result<SparseBinaryMatrix> {
        self.transform(&EmbeddingMatrix::Dense(data.clone()))
    }

    /// Nearest-reference assignment in an already-embedded feature space.
    /// Feature-space rows are compared with the same Euclidean contract; the
    /// squared distance is evaluated as `|r|^2 - 2<x, r>` over sparse rows.
    pub fn transform_feature_space(&self, data: &EmbeddingMatrix) -> Result<SparseBinaryMatrix> {
        self.transform(data)
    }

    fn assign_dense(&self, refs: &Array2<f64>, x: ArrayView2<f64>, cells: &mut [u32]) {
        const CHUNK: usize = 128;
        let t = self.t();
        let refs_t = refs.t();
        cells
            .par_chunks_mut(CHUNK * t)
            .enumerate()
            .for_each(|(chunk, out)| {
                let start = chunk * CHUNK;
                let rows = out.len() / t;
                let block = x.slice(s![start..start + rows, ..]);
                let dots = block.dot(&refs_t);
                let dots = dots.as_standard_layout();
                for (i, row_out) in out.chunks_mut(t).enumerate() {
                    let acc = dots.row(i);
                    self.pick_cells(acc.as_slice().expect("standard layout"), row_out);
                }
            });
    }

    /// Picks, per tessellation, the slot minimising `|r|^2 - 2<x, r>`.
    #[inline]
    fn pick_cells(&self, dots: &[f64], out: &mut [u32]) {
        let psi = self.psi;
        for (b, cell) in out.iter_mut().enumerate() {
            let base = b * psi;
            let mut best = 0usize;
            let mut best_score = f64::INFINITY;
            for j in 0..psi {
                let score = self.norms_sq[base + j] - 2.0 * dots[base + j];
                if score < best_score {
                    best_score = score;
                    best = j;
                }
            }
            *cell = best as u32;
        }
    }
}

/// Output of the Isolation Kernel feature map: one active cell per
/// tessellation for every row, i.e. a `{0,1}` matrix with `t * psi` columns
/// and exactly `t` ones per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseBinaryMatrix {
    nrows: usize,
    t: usize,
    psi: usize,
    /// Row-major `nrows x t` cell indices in `0..psi`.
    cells: Vec<u32>,
}

impl SparseBinaryMatrix {
    pub fn from_cells(nrows: usize, t: usize, psi: usize, cells: Vec<u32>) -> Result<Self> {
        if cells.len() != nrows * t || cells.iter().any(|&c| c as usize >= psi) {
            return Err(Error::param("cell table does not match nrows x t with cells < psi"));
        }
        Ok(Self {
            nrows,
            t,
            psi,
            cells,
        })
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.t * self.psi
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn psi(&self) -> usize {
        self.psi
    }

    /// Active cell of `row` in each tessellation.
    pub fn cells(&self, row: usize) -> &[u32] {
        &self.cells[row * self.t..(row + 1) * self.t]
    }

    /// Column indices of the ones in `row`, ascending.
    pub fn active_columns(&self, row: usize) -> impl Iterator<Item = u32> + '_ {
        let psi = self.psi as u32;
        self.cells(row)
            .iter()
            .enumerate()
            .map(move |(b, &c)| b as u32 * psi + c)
    }

    /// Kernel value between `row` of `self` and `other_row` of `other`.
    pub fn similarity(&self, row: usize, other: &SparseBinaryMatrix, other_row: usize) -> f64 {
        ik_similarity(self.cells(row), other.cells(other_row))
    }

    pub fn to_csr(&self) -> CsrMatrix {
        let rows = (0..self.nrows)
            .map(|r| self.active_columns(r).map(|c| (c, 1.0)).collect())
            .collect();
        CsrMatrix::from_sorted_rows(self.ncols(), rows)
    }

    /// Number of rows falling in each cell, laid out `[tessellation][cell]`.
    pub fn cell_mass(&self) -> Vec<Vec<usize>> {
        let mut mass = vec![vec![0usize; self.psi]; self.t];
        for r in 0..self.nrows {
            for (b, &c) in self.cells(r).iter().enumerate() {
                mass[b][c as usize] += 1;
            }
        }
        mass
    }
}

/// Fraction of tessellations that place the two rows in the same cell.
///
/// Both arguments are per-tessellation cell tables from the same model.
pub fn ik_similarity(a: &[u32], b: &[u32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    let matched = a.iter().zip(b).filter(|(x, y)| x == y).count();
    matched as f64 / a.len() as f64
}

/// `l_p` distance between the binary feature vectors of two rows. Each
/// unmatched tessellation contributes two differing positions.
pub fn ik_feature_distance(a: &[u32], b: &[u32], p: f64) -> f64 {
    let unmatched = a.iter().zip(b).filter(|(x, y)| x != y).count();
    ((2 * unmatched) as f64).powf(1.0 / p)
}

/// Gaussian Gram matrix `exp(-|x - y|^2 / (2 sigma^2))` over the rows of `data`.
pub fn gk_gram(data: &Array2<f64>, bandwidth: f64) -> Result<Array2<f64>> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::param(format!(
            "Gaussian bandwidth must be positive, got {bandwidth}"
        )));
    }
    let n = data.nrows();
    let denom = 2.0 * bandwidth * bandwidth;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = data.row(i);
            (0..n)
                .map(|j| {
                    let d2: f64 = xi
                        .iter()
                        .zip(data.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (-d2 / denom).exp()
                })
                .collect()
        })
        .collect();
    Ok(Array2::from_shape_vec((n, n), rows.into_iter().flatten().collect()).expect("n x n"))
}

/// Median pairwise Euclidean distance over at most 1000 rows (sampled with
/// `seed` when the data is larger). Falls back to 1 when every sampled row
/// coincides.
pub fn median_bandwidth(data: &Array2<f64>, seed: u64) -> f64 {
    const SUBSAMPLE: usize = 1000;
    let n = data.nrows();
    let rows: Vec<usize> = if n > SUBSAMPLE {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = index::sample(&mut rng, n, SUBSAMPLE).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    let mut dists = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for (a, &i) in rows.iter().enumerate() {
        for &j in &rows[a + 1..] {
            let d2: f64 = data
                .row(i)
                .iter()
                .zip(data.row(j))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            dists.push(d2.sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    let mid = dists.len() / 2;
    let (_, median, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    if *median > 0.0 {
        *median
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exhaustive_sample_is_a_permutation() {
        let x = Array2::from_shape_fn((5, 2), |(i, j)| (i * 2 + j) as f64);
        let m = IKModel::fit_dense(&x, &IKConfig::new(5, 3, 7)).unwrap();
        for set in m.reference_sets() {
            let mut s = set.clone();
            s.sort_unstable();
            assert_eq!(s, vec![0, 1, 2, 3, 4]);
        }
    }

    #[test]
    fn fit_rejects_small_data() {
        let x = Array2::zeros((3, 2));
        assert!(IKModel::fit_dense(&x, &IKConfig::new(4, 2, 0)).is_err());
        assert!(IKModel::fit_dense(&x, &IKConfig::new(0, 2, 0)).is_err());
    }

    #[test]
    fn fit_is_deterministic() {
        let x = Array2::from_shape_fn((50, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64);
        let a = IKModel::fit_dense(&x, &IKConfig::new(8, 10, 99)).unwrap();
        let b = IKModel::fit_dense(&x, &IKConfig::new(8, 10, 99)).unwrap();
        assert_eq!(a.reference_sets(), b.reference_sets());
    }

    #[test]
    fn one_dimensional_nearest_cell() {
        let x = array![[0.0], [10.0]];
        let m = IKModel::fit_dense(&x, &IKConfig::new(2, 4, 1)).unwrap();
        let out = m.transform_dense(&array![[4.0], [10.0], [0.0]]).unwrap();
        for (b, set) in m.reference_sets().iter().enumerate() {
            let slot_of = |row: usize| set.iter().position(|&r| r == row).unwrap() as u32;
            assert_eq!(out.cells(0)[b], slot_of(0));
            assert_eq!(out.cells(1)[b], slot_of(1));
            assert_eq!(out.cells(2)[b], slot_of(0));
        }
    }

    #[test]
    fn transform_checks_dimension() {
        let x = array![[0.0, 1.0], [1.0, 0.0]];
        let m = IKModel::fit_dense(&x, &IKConfig::new(2, 2, 1)).unwrap();
        assert!(m.transform_dense(&array![[1.0]]).is_err());
    }

    #[test]
    fn ties_go_to_lowest_reference_index() {
        // query 5 is equidistant from 0 and 10
        let x = array![[0.0], [10.0]];
        let m = IKModel::fit_dense(&x, &IKConfig::new(2, 6, 5)).unwrap();
        let out = m.transform_dense(&array![[5.0]]).unwrap();
        assert!(out.cells(0).iter().all(|&c| c == 0));
    }

    #[test]
    fn similarity_hand_counts() {
        let a = [0u32, 1, 2, 3];
        let b = [0u32, 1, 2, 0];
        assert_eq!(ik_similarity(&a, &a), 1.0);
        assert_eq!(ik_similarity(&a, &b), 0.75);
        assert_eq!(ik_feature_distance(&a, &b, 1.0), 2.0);
        let c = [1u32, 2, 3, 1];
        assert_eq!(ik_similarity(&a, &c), 0.0);
        assert!((ik_feature_distance(&a, &c, 2.0) - 8f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn gaussian_gram_closed_forms() {
        let sigma = 1.5;
        let d = sigma * 2f64.sqrt();
        let x = array![[0.0, 0.0], [0.0, 0.0], [d, 0.0]];
        let g = gk_gram(&x, sigma).unwrap();
        assert_eq!(g[[0, 0]], 1.0);
        assert_eq!(g[[0, 1]], 1.0);
        assert!((g[[0, 2]] - (-1f64).exp()).abs() < 1e-12);
        assert!(gk_gram(&x, 0.0).is_err());
        assert!(gk_gram(&x, -1.0).is_err());
    }

    #[test]
    fn median_bandwidth_small_cases() {
        let x = array![[0.0], [1.0], [3.0]];
        // pairwise distances 1, 2, 3
        assert_eq!(median_bandwidth(&x, 0), 2.0);
        assert_eq!(median_bandwidth(&Array2::zeros((4, 2)), 0), 1.0);
    }
}
