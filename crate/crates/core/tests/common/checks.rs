//! The exact theorem and oracle checks, shared by the integration tests and
//! the acceptance runner. Each returns a short summary on success and the
//! first discrepancy on failure.

use mwdk::ikernel::ik_feature_distance;
use mwdk::{
    build_operator, metric_acc, metric_ari, metric_nmi, spectral_cluster, wl_iterate, AggregatorKind,
    AttributedGraph, ClusterConfig, Eigensolver, EmbeddingMatrix, IKConfig, IKModel, NormalizationKind,
};
use ndarray::Array2;
use rand::Rng;

use super::*;

pub type Check = std::result::Result<String, String>;

fn to_array(rows: &Dense) -> Array2<f64> {
    let (n, d) = (rows.len(), rows[0].len());
    Array2::from_shape_vec((n, d), rows.iter().flatten().copied().collect()).expect("rectangular")
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn in_ball(rng: &mut ChaCha8Rng, center: &[f64], radius: f64) -> Vec<f64> {
    loop {
        let p: Vec<f64> = center.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        if p.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
            return p.iter().zip(center).map(|(v, c)| c + radius * v).collect();
        }
    }
}

/// Two clusters of `size` points each, every within-cluster distance at
/// most every between-cluster distance.
pub fn separated_clusters(rng: &mut ChaCha8Rng, size: usize, dims: usize) -> (Dense, Vec<usize>) {
    let mut far = vec![0.0; dims];
    far[0] = 6.0;
    let mut rows: Dense = (0..size).map(|_| in_ball(rng, &vec![0.0; dims], 1.0)).collect();
    rows.extend((0..size).map(|_| in_ball(rng, &far, 1.0)));
    let labels = (0..2 * size).map(|i| i / size).collect();
    (rows, labels)
}

pub fn separation_holds(rows: &Dense, labels: &[usize]) -> bool {
    let mut within: f64 = 0.0;
    let mut between = f64::INFINITY;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let d = dist(&rows[i], &rows[j]);
            if labels[i] == labels[j] {
                within = within.max(d);
            } else {
                between = between.min(d);
            }
        }
    }
    within <= between
}

/// Cross-cluster pairs never share a cell. Clusters hold at most `psi - 1`
/// points, so every reference sample contains points of both.
pub fn theorem2_separation(trials: u64) -> Check {
    let (psi, t) = (8, 50);
    for trial in 0..trials {
        let mut r = rng(1000 + trial);
        let (rows, labels) = separated_clusters(&mut r, psi - 1, 3);
        if !separation_holds(&rows, &labels) {
            return Err(format!("trial {trial}: construction violates the separation condition"));
        }
        let model = IKModel::fit_dense(&to_array(&rows), &IKConfig::new(psi, t, trial))
            .map_err(|e| e.to_string())?;
        let phi = model.transform_dense(&to_array(&rows)).map_err(|e| e.to_string())?;
        for i in 0..rows.len() {
            for j in 0..rows.len() {
                if labels[i] == labels[j] {
                    continue;
                }
                let kappa = phi.similarity(i, &phi, j);
                let l1 = ik_feature_distance(phi.cells(i), phi.cells(j), 1.0);
                if kappa != 0.0 || l1 != (2 * t) as f64 {
                    return Err(format!("trial {trial}: pair ({i}, {j}) has kappa {kappa}, l1 {l1}"));
                }
            }
        }
    }
    Ok(format!("{trials} constructions, every cross pair kappa = 0 and l1 = {}", 2 * t))
}

/// Differing feature positions plus `2t * kappa` equals `2t` on random pairs.
pub fn pairing_identity(pairs: usize) -> Check {
    let (psi, t, n) = (16, 100, 500);
    let mut r = rng(7);
    let rows: Dense = (0..n).map(|_| (0..4).map(|_| r.random::<f64>()).collect()).collect();
    let x = to_array(&rows);
    let phi = IKModel::fit_dense(&x, &IKConfig::new(psi, t, 3))
        .and_then(|m| m.transform_dense(&x))
        .map_err(|e| e.to_string())?;
    let csr = phi.to_csr();
    for _ in 0..pairs {
        let (i, j) = (r.random_range(0..n), r.random_range(0..n));
        let a: std::collections::BTreeSet<u32> = csr.row(i).0.iter().copied().collect();
        let b: std::collections::BTreeSet<u32> = csr.row(j).0.iter().copied().collect();
        let unmatched = a.symmetric_difference(&b).count();
        let kappa = phi.similarity(i, &phi, j);
        if unmatched as f64 + (2 * t) as f64 * kappa != (2 * t) as f64 {
            return Err(format!("pair ({i}, {j}): {unmatched} + 2t * {kappa} != {}", 2 * t));
        }
    }
    Ok(format!("{pairs} pairs"))
}

/// Mean mass per Voronoi cell and its coefficient of variation.
pub fn theorem1_mass(n: usize) -> Check {
    let (psi, t) = (16, 100);
    let mut r = rng(11);
    let x = Array2::from_shape_fn((n, 2), |_| r.random::<f64>());
    let phi = IKModel::fit_dense(&x, &IKConfig::new(psi, t, 5))
        .and_then(|m| m.transform_dense(&x))
        .map_err(|e| e.to_string())?;
    let masses: Vec<f64> = phi.cell_mass().into_iter().flatten().map(|m| m as f64).collect();
    let total: f64 = masses.iter().sum();
    let mean = total / masses.len() as f64;
    let var = masses.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / masses.len() as f64;
    let cv = var.sqrt() / mean;
    let expected = n as f64 / psi as f64;
    if mean != expected {
        return Err(format!("mean cell mass {mean}, expected {expected}"));
    }
    if !(cv < 1.0) {
        return Err(format!("coefficient of variation {cv:.4} >= 1"));
    }
    Ok(format!("mean {mean}, cv {cv:.4}"))
}

/// Avg aggregation against explicit matrix powers.
pub fn aggregation_oracle(graphs: u64) -> Check {
    let mut worst: f64 = 0.0;
    for gi in 0..graphs {
        let mut r = rng(200 + gi);
        let n = r.random_range(2..=30);
        let d = r.random_range(1..=5);
        let p = r.random_range(0.05..0.4);
        let edges = random_edges(&mut r, n, p);
        let x: Dense = (0..n).map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let (g, _) = AttributedGraph::from_edges(edges.iter().copied(), to_array(&x), None).map_err(|e| e.to_string())?;
        for norm in [NormalizationKind::Sym, NormalizationKind::Rw, NormalizationKind::Wl] {
            let op = build_operator(&g, norm);
            for h in 0..=4 {
                let got = wl_iterate(&EmbeddingMatrix::Dense(to_array(&x)), &op, h, AggregatorKind::Avg, false)
                    .map_err(|e| e.to_string())?
                    .to_dense()
                    .into_owned();
                let want = dense_wl_oracle(n, &edges, &x, norm, h);
                for i in 0..n {
                    for c in 0..d {
                        let err = (got[[i, c]] - want[i][c]).abs();
                        worst = worst.max(err);
                        if err > 1e-12 {
                            return Err(format!("graph {gi} {norm:?} h={h} entry ({i}, {c}) off by {err:e}"));
                        }
                    }
                }
            }
        }
    }
    Ok(format!("{graphs} graphs, max error {worst:e}"))
}

/// Library metrics against oracles on every pair of small partitions.
pub fn metric_oracles(max_n: usize) -> Check {
    let mut count = 0usize;
    for n in 1..=max_n {
        let parts = set_partitions(n, 3);
        for pred in &parts {
            for truth in &parts {
                let checks = [
                    ("ACC", metric_acc(pred, truth), acc_oracle(pred, truth)),
                    ("NMI", metric_nmi(pred, truth), nmi_oracle(pred, truth)),
                    ("ARI", metric_ari(pred, truth), ari_oracle(pred, truth)),
                ];
                for (name, got, want) in checks {
                    let got = got.map_err(|e| e.to_string())?;
                    if (got - want).abs() > 1e-12 {
                        return Err(format!("{name} on {pred:?} vs {truth:?}: {got} != {want}"));
                    }
                }
                count += 1;
            }
        }
    }
    Ok(format!("{count} partition pairs"))
}

/// Spectral clustering against Jacobi eigenvectors plus exhaustive k-means.
pub fn spectral_oracle_check(instances: u64) -> Check {
    for inst in 0..instances {
        let mut r = rng(300 + inst);
        let k = r.random_range(2..=3);
        let n = r.random_range(4 * k..=40);
        let (rows, _) = block_embedding(&mut r, n, k, 6, 0.6);
        let want = spectral_oracle(&rows, k);
        for solver in [Eigensolver::Lanczos, Eigensolver::Dense] {
            let mut cfg = ClusterConfig::new(k, inst);
            cfg.eigensolver = solver;
            let got = spectral_cluster(&EmbeddingMatrix::Dense(to_array(&rows)), &cfg).map_err(|e| e.to_string())?;
            if !same_partition(got.labels(), &want) {
                return Err(format!("instance {inst} (n={n}, k={k}, {solver:?}): {:?} vs {want:?}", got.labels()));
            }
        }
    }
    Ok(format!("{instances} instances"))
}
