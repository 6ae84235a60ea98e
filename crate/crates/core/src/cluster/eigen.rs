//! Leading eigenpairs of symmetric operators.
//!
//! The iterative path is a block Krylov (block Lanczos with full
//! reorthogonalization) Rayleigh-Ritz scheme with explicit restarts. Using a
//! block of more than `k` vectors lets it resolve repeated leading
//! eigenvalues, which appear whenever the affinity graph has several
//! disconnected components.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// A symmetric linear operator on `R^n`.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl SymmetricOperator for Array2<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (yi, row) in y.iter_mut().zip(self.outer_iter()) {
            *yi = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KrylovOptions {
    /// Residual tolerance `|A v - theta v|` for unit Ritz vectors.
    pub tol: f64,
    /// Basis size that triggers a restart.
    pub max_basis: usize,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_basis: 240,
            max_restarts: 50,
            seed: 0,
        }
    }
}

/// Eigenpairs sorted by descending eigenvalue; vectors are the columns.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Array2<f64>,
}

/// The `k` largest eigenpairs of a dense symmetric matrix.
pub fn dense_top_eigenpairs(m: &Array2<f64>, k: usize) -> Eigenpairs {
    let n = m.nrows();
    let mat = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[[i, j]] + m[[j, i]]));
    let eig = SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let k = k.min(n);
    let values = order[..k].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Array2::from_shape_fn((n, k), |(r, c)| eig.eigenvectors[(r, order[c])]);
    Eigenpairs { values, vectors }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Orthogonalizes `v` against `basis` (two Gram-Schmidt passes) and
/// normalizes it. Returns `false` when nothing independent is left.
fn orthonormalize(v: &mut [f64], basis: &[Vec<f64>]) -> bool {
    let start = dot(v, v).sqrt();
    if start == 0.0 {
        return false;
    }
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            axpy(-c, q, v);
        }
    }
    let norm = dot(v, v).sqrt();
    if norm <= 1e-10 * start || norm == 0.0 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// The `k` largest eigenpairs of `op`.
pub fn krylov_top_eigenpairs<O: SymmetricOperator + ?Sized>(
    op: &O,
    k: usize,
    opts: &KrylovOptions,
) -> Result<Eigenpairs> {
    let n = op.dim();
    if k == 0 || k > n {
        return Err(Error::param(format!("cannot extract {k} eigenpairs from dimension {n}")));
    }
    let block = (k + 2).min(n);
    let max_basis = opts.max_basis.max(3 * block).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let random_vec = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    };

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut images: Vec<Vec<f64>> = Vec::new();
    let mut pending: Vec<Vec<f64>> = (0..block).map(|_| random_vec(&mut rng)).collect();
    let mut restarts = 0usize;
    let mut matvecs = 0usize;
    let mut last_residual;

    loop {
        // extend the basis with the pending block
        let mut added = 0;
        for mut v in pending.drain(..) {
            if basis.len() == n {
                break;
            }
            let mut ok = orthonormalize(&mut v, &basis);
            let mut tries = 0;
            while !ok && tries < 3 {
                v = random_vec(&mut rng);
                ok = orthonormalize(&mut v, &basis);
                tries += 1;
            }
            if !ok {
                continue;
            }
            let mut av = vec![0.0; n];
            op.apply(&v, &mut av);
            matvecs += 1;
            basis.push(v);
            images.push(av);
            added += 1;
        }

        let m = basis.len();
        let projected = DMatrix::from_fn(m, m, |i, j| {
            0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i]))
        });
        let eig = SymmetricEigen::new(projected);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

        let ritz = |idx: usize| -> (Vec<f64>, Vec<f64>) {
            let mut y = vec![0.0; n];
            let mut ay = vec![0.0; n];
            for j in 0..m {
                let s = eig.eigenvectors[(j, idx)];
                axpy(s, &basis[j], &mut y);
                axpy(s, &images[j], &mut ay);
            }
            (y, ay)
        };

        let keep = block.min(m);
        let mut residuals = Vec::with_capacity(keep);
        let mut pairs = Vec::with_capacity(keep);
        for &idx in &order[..keep] {
            let theta = eig.eigenvalues[idx];
            let (y, ay) = ritz(idx);
            let r: Vec<f64> = ay.iter().zip(&y).map(|(a, b)| a - theta * b).collect();
            residuals.push(dot(&r, &r).sqrt());
            pairs.push((theta, y, ay, r));
        }
        last_residual = residuals[..k.min(keep)].iter().copied().fold(0.0, f64::max);

        let exhausted = m == n || (added == 0 && m >= k);
        if (m >= k && last_residual <= opts.tol) || exhausted {
            if m < k {
                break;
            }
            let values = pairs[..k].iter().map(|p| p.0).collect();
            let vectors = Array2::from_shape_fn((n, k), |(r, c)| pairs[c].1[r]);
            return Ok(Eigenpairs { values, vectors });
        }

        if m + block > max_basis {
            restarts += 1;
            if restarts > opts.max_restarts {
                break;
            }
            // restart from the current Ritz block; its residuals seed the next block
            basis.clear();
            images.clear();
            for (_, y, ay, _) in &pairs {
                basis.push(y.clone());
                images.push(ay.clone());
            }
            pending = pairs.into_iter().map(|p| p.3).collect();
        } else {
            pending = images[m - added..].to_vec();
        }
    }

    Err(Error::Numerical {
        solver: "block Krylov eigensolver",
        iterations: matvecs,
        residual: last_residual,
    })
}
