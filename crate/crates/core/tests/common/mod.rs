//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's numerical code.
#![allow(dead_code)]

pub mod checks;

use mwdk::{AggregatorKind, NormalizationKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Dense = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; p]; n];
    for i in 0..n {
        for k in 0..m {
            for j in 0..p {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// Dense normalized neighbor matrix of an undirected edge list.
pub fn dense_operator(n: usize, edges: &[(usize, usize)], norm: NormalizationKind) -> Dense {
    let mut a = vec![vec![0.0; n]; n];
    for &(u, v) in edges {
        if u != v {
            a[u][v] = 1.0;
            a[v][u] = 1.0;
        }
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        if d[i] == 0.0 {
            w[i][i] = 1.0;
            continue;
        }
        for j in 0..n {
            if a[i][j] != 0.0 {
                w[i][j] = match norm {
                    NormalizationKind::Sym => 1.0 / (d[i] * d[j]).sqrt(),
                    NormalizationKind::Rw => 1.0 / d[j],
                    NormalizationKind::Wl => 1.0 / d[i],
                };
            }
        }
    }
    w
}

/// `X_h = ((I + W) / 2)^h X` via explicit matrix powers.
pub fn dense_wl_oracle(n: usize, edges: &[(usize, usize)], x: &Dense, norm: NormalizationKind, h: usize) -> Dense {
    let w = dense_operator(n, edges, norm);
    let mut step = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            step[i][j] = 0.5 * w[i][j] + if i == j { 0.5 } else { 0.0 };
        }
    }
    let mut power: Dense = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _ in 0..h {
        power = matmul(&step, &power);
    }
    matmul(&power, x)
}

/// Per-node aggregation written from the definition, for Min/Max.
pub fn extremum_oracle(n: usize, edges: &[(usize, usize)], x: &Dense, agg: AggregatorKind) -> Dense {
    let mut nbrs = vec![Vec::new(); n];
    for &(u, v) in edges {
        if u != v && !nbrs[u].contains(&v) {
            nbrs[u].push(v);
            nbrs[v].push(u);
        }
    }
    (0..n)
        .map(|v| {
            let mut pool = nbrs[v].clone();
            pool.push(v);
            (0..x[0].len())
                .map(|c| {
                    let vals = pool.iter().map(|&u| x[u][c]);
                    let r = match agg {
                        AggregatorKind::Min => vals.fold(f64::INFINITY, f64::min),
                        AggregatorKind::Max => vals.fold(f64::NEG_INFINITY, f64::max),
                        _ => unreachable!(),
                    };
                    0.5 * (x[v][c] + r)
                })
                .collect()
        })
        .collect()
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues and eigenvectors (as columns of the second result).
pub fn jacobi_eigen(m: &Dense) -> (Vec<f64>, Dense) {
    let n = m.len();
    let mut a = m.clone();
    let mut v: Dense = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Within-cluster sum of squares of a labelling (empty clusters ignored).
pub fn sse(points: &Dense, labels: &[usize], k: usize) -> f64 {
    let d = points[0].len();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for c in 0..d {
            sums[l][c] += p[c];
        }
    }
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| {
            let mean: Vec<f64> = sums[l].iter().map(|s| s / counts[l] as f64).collect();
            sq(p, &mean)
        })
        .sum()
}

/// All labelings of `n` items into at most `max_blocks` blocks, as
/// restricted growth strings.
pub fn set_partitions(n: usize, max_blocks: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, n: usize, max_blocks: usize, used: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for b in 0..=used.min(max_blocks - 1) {
            prefix.push(b);
            rec(prefix, n, max_blocks, used.max(b + 1), out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return vec![Vec::new()];
    }
    rec(&mut Vec::new(), n, max_blocks, 0, &mut out);
    out
}

/// Optimal k-means partition by exhaustive enumeration.
pub fn exhaustive_partition_kmeans(points: &Dense, k: usize) -> (Vec<usize>, f64) {
    set_partitions(points.len(), k)
        .into_iter()
        .map(|p| {
            let s = sse(points, &p, k);
            (p, s)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one partition")
}

/// Lloyd's algorithm started from every k-subset of points; the lowest
/// final inertia wins.
pub fn exhaustive_seed_kmeans(points: &Dense, k: usize) -> (Vec<usize>, f64) {
    let n = points.len();
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let mut centers: Dense = idx.iter().map(|&i| points[i].clone()).collect();
        let mut labels = vec![usize::MAX; n];
        for _ in 0..500 {
            let next: Vec<usize> = points
                .iter()
                .map(|p| {
                    (0..k)
                        .min_by(|&a, &b| sq(p, &centers[a]).total_cmp(&sq(p, &centers[b])))
                        .expect("k > 0")
                })
                .collect();
            if next == labels {
                break;
            }
            labels = next;
            for c in 0..k {
                let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
                if !members.is_empty() {
                    for d in 0..centers[c].len() {
                        centers[c][d] = members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64;
                    }
                }
            }
        }
        let s = sse(points, &labels, k);
        if best.as_ref().map_or(true, |b| s < b.1 - 1e-12) {
            best = Some((labels, s));
        }
        // next combination
        let mut i = k;
        loop {
            if i == 0 {
                return best.expect("at least one subset");
            }
            i -= 1;
            if idx[i] < n - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Reference spectral clustering: linear affinity without self-loops,
/// Jacobi eigenvectors of `D^{-1/2} S D^{-1/2}`, unit rows, exhaustive
/// k-means.
pub fn spectral_oracle(e: &Dense, k: usize) -> Vec<usize> {
    let n = e.len();
    let mut s: Dense = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { e[i].iter().zip(&e[j]).map(|(a, b)| a * b).sum::<f64>().max(0.0) }).collect())
        .collect();
    for i in 0..n {
        if s[i].iter().all(|&v| v == 0.0) {
            s[i][i] = 1.0;
        }
    }
    let d: Vec<f64> = s.iter().map(|r| r.iter().sum()).collect();
    let m: Dense = (0..n).map(|i| (0..n).map(|j| s[i][j] / (d[i] * d[j]).sqrt()).collect()).collect();
    let (vals, vecs) = jacobi_eigen(&m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
    let u: Dense = (0..n)
        .map(|i| {
            let row: Vec<f64> = order[..k].iter().map(|&c| vecs[i][c]).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.iter().map(|v| if norm > 0.0 { v / norm } else { 0.0 }).collect()
        })
        .collect();
    exhaustive_seed_kmeans(&u, k).0
}

/// Two labelings describe the same partition.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len()
        && (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

/// Best accuracy over every one-to-one relabeling.
pub fn acc_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let size = pred.iter().chain(truth).max().map_or(0, |m| m + 1);
    let ids: Vec<usize> = (0..size).collect();
    permutations(&ids)
        .iter()
        .map(|perm| pred.iter().zip(truth).filter(|(&p, &t)| perm[p] == t).count())
        .max()
        .unwrap_or(0) as f64
        / pred.len() as f64
}

/// Mutual information and entropies from joint frequencies, with the
/// arithmetic-mean normalizer.
pub fn nmi_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len() as f64;
    let size = pred.iter().chain(truth).max().map_or(0, |m| m + 1);
    let p = |f: &dyn Fn(usize) -> bool| (0..pred.len()).filter(|&i| f(i)).count() as f64 / n;
    let mut hx = 0.0;
    let mut hy = 0.0;
    let mut mi = 0.0;
    for a in 0..size {
        let pa = p(&|i| pred[i] == a);
        if pa > 0.0 {
            hx -= pa * pa.log2();
        }
        let pb = p(&|i| truth[i] == a);
        if pb > 0.0 {
            hy -= pb * pb.log2();
        }
        for b in 0..size {
            let pab = p(&|i| pred[i] == a && truth[i] == b);
            let pb = p(&|i| truth[i] == b);
            if pab > 0.0 {
                mi += pab * (pab / (pa * pb)).log2();
            }
        }
    }
    if hx + hy == 0.0 {
        return 1.0;
    }
    mi / ((hx + hy) / 2.0)
}

/// Adjusted Rand index from the four pair-agreement counts.
pub fn ari_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let (mut n11, mut n10, mut n01, mut n00) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..pred.len() {
        for j in i + 1..pred.len() {
            match (pred[i] == pred[j], truth[i] == truth[j]) {
                (true, true) => n11 += 1.0,
                (true, false) => n10 += 1.0,
                (false, true) => n01 += 1.0,
                (false, false) => n00 += 1.0,
            }
        }
    }
    let denom = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
    if denom == 0.0 {
        return 1.0;
    }
    2.0 * (n00 * n11 - n01 * n10) / denom
}

/// A random undirected simple graph on `n` nodes.
pub fn random_edges(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Nonnegative rows around `k` well-spread prototypes plus noise, and the
/// generating block of each row.
pub fn block_embedding(rng: &mut ChaCha8Rng, n: usize, k: usize, dims: usize, noise: f64) -> (Dense, Vec<usize>) {
    let protos: Dense = (0..k)
        .map(|b| (0..dims).map(|d| if d % k == b { 1.0 } else { 0.05 }).collect())
        .collect();
    let blocks: Vec<usize> = (0..n).map(|i| i % k).collect();
    let rows = blocks
        .iter()
        .map(|&b| protos[b].iter().map(|&v| v + noise * rng.random::<f64>()).collect())
        .collect();
    (rows, blocks)
}
