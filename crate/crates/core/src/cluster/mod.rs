//! Spectral clustering of node embeddings.

pub mod eigen;

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ikernel::{gk_gram, median_bandwidth};
use crate::matrix::EmbeddingMatrix;
use crate::seed::derive_seed;
use crate::sparse::CsrMatrix;

use eigen::{dense_top_eigenpairs, krylov_top_eigenpairs, KrylovOptions, SymmetricOperator};

/// Below this size `Eigensolver::Auto` uses a full dense decomposition.
pub const DENSE_EIGEN_BELOW: usize = 500;
/// Above this size a nonnegative linear affinity is applied implicitly
/// through `E (E^T x)` instead of being materialized.
pub const IMPLICIT_AFFINITY_ABOVE: usize = 6000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Affinity {
    /// `S = E E^T`.
    #[default]
    Linear,
    /// Inner products of unit-normalized rows.
    Cosine,
    /// `exp(-|x - y|^2 / (2 sigma^2))` with `sigma` the median pairwise
    /// distance between rows.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Eigensolver {
    #[default]
    Auto,
    Lanczos,
    Dense,
}

fn default_restarts() -> usize {
    10
}

fn default_max_iter() -> usize {
    300
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub k: usize,
    #[serde(default)]
    pub affinity: Affinity,
    #[serde(default = "default_restarts")]
    pub kmeans_restarts: usize,
    #[serde(default = "default_max_iter")]
    pub kmeans_max_iter: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub eigensolver: Eigensolver,
}

impl ClusterConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            affinity: Affinity::Linear,
            kmeans_restarts: default_restarts(),
            kmeans_max_iter: default_max_iter(),
            seed,
            eigensolver: Eigensolver::Auto,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("k must be at least 2, got {}", self.k)));
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::Config("kmeans_restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Community ids in `[0, k)`. Some ids may be unused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterAssignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::param(format!("label {bad} out of range for k = {k}")));
        }
        Ok(Self { labels, k })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn empty_clusters(&self) -> Vec<usize> {
        self.sizes()
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 0)
            .map(|(c, _)| c)
            .collect()
    }

    /// One label per line.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.labels.len() * 2);
        for l in &self.labels {
            writeln!(out, "{l}").expect("writing to a String");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

pub fn spectral_cluster(e: &EmbeddingMatrix, cfg: &ClusterConfig) -> Result<ClusterAssignment> {
    cfg.validate()?;
    let n = e.nrows();
    if n < cfg.k {
        return Err(Error::param(format!("{n} nodes cannot form {} clusters", cfg.k)));
    }
    let e = match cfg.affinity {
        Affinity::Linear | Affinity::Gaussian => e.clone(),
        Affinity::Cosine => e.row_normalized(),
    };
    let use_dense = match cfg.eigensolver {
        Eigensolver::Dense => true,
        Eigensolver::Lanczos => false,
        Eigensolver::Auto => n < DENSE_EIGEN_BELOW,
    };
    let opts = KrylovOptions {
        seed: derive_seed(cfg.seed, u64::MAX),
        ..KrylovOptions::default()
    };

    let pairs = if !use_dense
        && cfg.affinity != Affinity::Gaussian
        && n > IMPLICIT_AFFINITY_ABOVE
        && !e.has_negative()
    {
        let op = ImplicitAffinity::new(&e);
        krylov_top_eigenpairs(&op, cfg.k, &opts)?
    } else {
        let s = match cfg.affinity {
            Affinity::Gaussian => {
                let x = e.to_dense();
                gk_gram(&x, median_bandwidth(&x, cfg.seed))?
            }
            _ => e.gram(),
        };
        let m = normalized_affinity(s);
        if use_dense {
            dense_top_eigenpairs(&m, cfg.k)
        } else {
            krylov_top_eigenpairs(&m, cfg.k, &opts)?
        }
    };

    let mut u = pairs.vectors;
    for mut row in u.outer_iter_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    Ok(kmeans(u.view(), cfg.k, cfg.kmeans_restarts, cfg.kmeans_max_iter, cfg.seed))
}

/// `D^{-1/2} S D^{-1/2}` after zeroing the diagonal, clamping negatives and
/// giving rows without any affinity a unit self-loop. Its top eigenvectors
/// are the bottom eigenvectors of the symmetric normalized Laplacian.
pub fn normalized_affinity(mut s: Array2<f64>) -> Array2<f64> {
    s.mapv_inplace(|v| v.max(0.0));
    let n = s.nrows();
    for i in 0..n {
        s[[i, i]] = 0.0;
        if s.row(i).iter().all(|&v| v == 0.0) {
            s[[i, i]] = 1.0;
        }
    }
    let inv_sqrt: Vec<f64> = s.outer_iter().map(|r| 1.0 / r.sum().sqrt()).collect();
    for ((i, j), v) in s.indexed_iter_mut() {
        *v *= inv_sqrt[i] * inv_sqrt[j];
    }
    s
}

/// [`normalized_affinity`] of `E E^T` for nonnegative `E`, never formed
/// explicitly.
struct ImplicitAffinity {
    e: CsrMatrix,
    et: CsrMatrix,
    inv_sqrt: Vec<f64>,
    /// `|e_i|^2`, removed to zero the diagonal.
    self_sq: Vec<f64>,
    isolated: Vec<usize>,
}

impl ImplicitAffinity {
    fn new(e: &EmbeddingMatrix) -> Self {
        let e = e.to_csr().into_owned();
        let et = e.transpose();
        let ones = vec![1.0; e.nrows()];
        let col_sums = csr_mul_vec(&et, &ones);
        let degrees = csr_mul_vec(&e, &col_sums);
        let mut isolated = Vec::new();
        let mut self_sq = Vec::with_capacity(e.nrows());
        let inv_sqrt = degrees
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let sq = e.row_norm_sq(i);
                self_sq.push(sq);
                let off = d - sq;
                // relative guard against cancellation in `d - |e_i|^2`
                if off <= 1e-12 * d.max(f64::MIN_POSITIVE) {
                    isolated.push(i);
                    1.0
                } else {
                    1.0 / off.sqrt()
                }
            })
            .collect();
        Self {
            e,
            et,
            inv_sqrt,
            self_sq,
            isolated,
        }
    }
}

fn csr_mul_vec(m: &CsrMatrix, x: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|r| {
            let (cols, vals) = m.row(r);
            cols.iter().zip(vals).map(|(&c, v)| v * x[c as usize]).sum()
        })
        .collect()
}

impl SymmetricOperator for ImplicitAffinity {
    fn dim(&self) -> usize {
        self.e.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let scaled: Vec<f64> = x.iter().zip(&self.inv_sqrt).map(|(a, b)| a * b).collect();
        let inner = csr_mul_vec(&self.et, &scaled);
        let outer = csr_mul_vec(&self.e, &inner);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = (outer[i] - self.self_sq[i] * scaled[i]) * self.inv_sqrt[i];
        }
        for &i in &self.isolated {
            y[i] = x[i];
        }
    }
}

/// One Lloyd run from a k-means++ seeding.
#[derive(Debug, Clone)]
pub struct KmeansRun {
    pub labels: Vec<usize>,
    pub centers: Array2<f64>,
    pub inertia: f64,
    /// Inertia after every assignment step.
    pub history: Vec<f64>,
    pub iterations: usize,
}

/// Best-inertia partition over `restarts` independent runs. Restart `r` is
/// seeded with `derive_seed(seed, r)`; ties keep the earliest restart.
pub fn kmeans(x: ArrayView2<'_, f64>, k: usize, restarts: usize, max_iter: usize, seed: u64) -> ClusterAssignment {
    let runs: Vec<KmeansRun> = (0..restarts.max(1) as u64)
        .into_par_iter()
        .map(|r| kmeans_single(x, k, max_iter, derive_seed(seed, r)))
        .collect();
    let best = runs
        .into_iter()
        .reduce(|best, run| if run.inertia < best.inertia { run } else { best })
        .expect("at least one restart");
    ClusterAssignment {
        labels: best.labels,
        k,
    }
}

pub fn kmeans_single(x: ArrayView2<'_, f64>, k: usize, max_iter: usize, seed: u64) -> KmeansRun {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeans_pp(x, k, &mut rng);
    let (mut labels, inertia) = assign(x, &centers);
    let mut history = vec![inertia];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        update_centers(x, &labels, &mut centers);
        let (next, inertia) = assign(x, &centers);
        history.push(inertia);
        if next == labels {
            break;
        }
        labels = next;
    }
    KmeansRun {
        labels,
        centers,
        inertia: *history.last().expect("non-empty"),
        history,
        iterations,
    }
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp(x: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = x.nrows();
    let mut centers = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            while d2[chosen] == 0.0 {
                chosen -= 1;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(c).assign(&x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    centers
}

/// Nearest center per row, ties to the lowest center index.
fn assign(x: ArrayView2<'_, f64>, centers: &Array2<f64>) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let labels = x
        .outer_iter()
        .map(|row| {
            let mut best = (0, f64::INFINITY);
            for (c, center) in centers.outer_iter().enumerate() {
                let d = sq_dist(row, center);
                if d < best.1 {
                    best = (c, d);
                }
            }
            inertia += best.1;
            best.0
        })
        .collect();
    (labels, inertia)
}

/// Means of the assigned rows; an empty cluster keeps its center.
fn update_centers(x: ArrayView2<'_, f64>, labels: &[usize], centers: &mut Array2<f64>) {
    let k = centers.nrows();
    let mut sums = Array2::<f64>::zeros(centers.raw_dim());
    let mut counts = vec![0usize; k];
    for (row, &l) in x.outer_iter().zip(labels) {
        let mut s = sums.row_mut(l);
        s += &row;
        counts[l] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            let mean = &sums.row(c) / counts[c] as f64;
            centers.row_mut(c).assign(&mean);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn separated_points() {
        let x = array![[0.0], [10.0]];
        let a = kmeans(x.view(), 2, 3, 100, 1);
        assert_ne!(a.labels()[0], a.labels()[1]);
    }

    #[test]
    fn identical_points_leave_an_empty_cluster() {
        let x = Array2::from_elem((5, 2), 1.5);
        let a = kmeans(x.view(), 2, 4, 100, 9);
        assert_eq!(a.empty_clusters().len(), 1);
        assert_eq!(a.sizes().iter().sum::<usize>(), 5);
    }

    #[test]
    fn spectral_recovers_identical_groups() {
        let mut rows = Vec::new();
        for i in 0..10 {
            rows.extend_from_slice(if i < 6 { &[1.0, 0.0, 0.2] } else { &[0.0, 1.0, 0.2] });
        }
        let e = EmbeddingMatrix::Dense(Array2::from_shape_vec((10, 3), rows).unwrap());
        let a = spectral_cluster(&e, &ClusterConfig::new(2, 4)).unwrap();
        let l = a.labels();
        assert!(l[..6].iter().all(|&v| v == l[0]));
        assert!(l[6..].iter().all(|&v| v == l[6]));
        assert_ne!(l[0], l[6]);
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let e = EmbeddingMatrix::Dense(array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let a = spectral_cluster(&e, &ClusterConfig::new(3, 0)).unwrap();
        assert!(a.empty_clusters().is_empty());
    }

    #[test]
    fn rejects_too_few_nodes() {
        let e = EmbeddingMatrix::Dense(array![[1.0], [2.0]]);
        assert!(matches!(
            spectral_cluster(&e, &ClusterConfig::new(3, 0)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn implicit_operator_matches_explicit() {
        let d = array![[1.0, 0.0, 2.0], [0.0, 0.0, 0.0], [0.5, 1.0, 0.0], [0.0, 3.0, 1.0]];
        let e = EmbeddingMatrix::Dense(d);
        let explicit = normalized_affinity(e.gram());
        let implicit = ImplicitAffinity::new(&e);
        let x = [0.3, -1.0, 2.0, 0.7];
        let mut a = vec![0.0; 4];
        let mut b = vec![0.0; 4];
        explicit.apply(&x, &mut a);
        implicit.apply(&x, &mut b);
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn assignment_text_export() {
        let a = ClusterAssignment::new(vec![1, 0, 1], 2).unwrap();
        assert_eq!(a.to_text(), "1\n0\n1\n");
        assert!(ClusterAssignment::new(vec![2], 2).is_err());
    }
}
