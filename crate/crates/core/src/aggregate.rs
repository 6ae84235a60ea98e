//! Neighborhood aggregation: the Weisfeiler-Lehman update
//! `x_v <- (x_v + agg_{u in N(v)} x_u) / 2` with a choice of neighbor
//! normalization and reduction.

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::matrix::EmbeddingMatrix;
use crate::sparse::{CsrMatrix, RowAccumulator};

/// Sparse storage is converted to dense once this fraction of entries is populated.
pub const DENSIFY_FILL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationKind {
    /// `D^{-1/2} A D^{-1/2}`
    Sym,
    /// `A D^{-1}`
    Rw,
    /// `D^{-1} A`, the plain neighbor mean.
    #[default]
    Wl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregatorKind {
    #[default]
    Avg,
    Min,
    Max,
    /// Min, max and avg outputs concatenated along the feature axis.
    All,
}

/// Normalized neighbor operator of a graph. Rows of isolated nodes hold a
/// single unit self-weight, so those nodes are fixed points of every step.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    weights: CsrMatrix,
    kind: NormalizationKind,
}

impl Operator {
    pub fn kind(&self) -> NormalizationKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.weights.nrows()
    }

    pub fn weights(&self) -> &CsrMatrix {
        &self.weights
    }

    /// Neighbors of `v`, or `v` itself when isolated.
    #[inline]
    fn support(&self, v: usize) -> &[u32] {
        self.weights.row(v).0
    }
}

pub fn build_operator(g: &AttributedGraph, kind: NormalizationKind) -> Operator {
    let deg: Vec<f64> = g.degrees().into_iter().map(|d| d as f64).collect();
    let rows = (0..g.n())
        .map(|v| {
            let nb = g.neighbors(v);
            if nb.is_empty() {
                return vec![(v as u32, 1.0)];
            }
            nb.iter()
                .map(|&u| {
                    let w = match kind {
                        NormalizationKind::Wl => 1.0 / deg[v],
                        NormalizationKind::Rw => 1.0 / deg[u as usize],
                        NormalizationKind::Sym => 1.0 / (deg[v] * deg[u as usize]).sqrt(),
                    };
                    (u, w)
                })
                .collect()
        })
        .collect();
    Operator {
        weights: CsrMatrix::from_sorted_rows(g.n(), rows),
        kind,
    }
}

/// One aggregation step.
pub fn wl_step(x: &EmbeddingMatrix, op: &Operator, agg: AggregatorKind) -> Result<EmbeddingMatrix> {
    if x.nrows() != op.n() {
        return Err(Error::param(format!(
            "feature matrix has {} rows but the operator is {} x {}",
            x.nrows(),
            op.n(),
            op.n()
        )));
    }
    match agg {
        AggregatorKind::Avg => Ok(avg_step(x, op)),
        AggregatorKind::Min => Ok(extremum_step(x, op, Extremum::Min)),
        AggregatorKind::Max => Ok(extremum_step(x, op, Extremum::Max)),
        AggregatorKind::All => {
            let parts = [
                extremum_step(x, op, Extremum::Min),
                extremum_step(x, op, Extremum::Max),
                avg_step(x, op),
            ];
            Ok(concat_columns(&parts))
        }
    }
}

/// Applies `h` aggregation steps. Returns the last iterate, or the
/// column-wise concatenation `[x^0, x^1, ..., x^h]` when `concat` is set.
///
/// For [`AggregatorKind::All`] the min, max and avg chains are iterated
/// independently and concatenated at the end, so the width is three times
/// that of a single chain rather than growing with every step.
pub fn wl_iterate(
    x: &EmbeddingMatrix,
    op: &Operator,
    h: usize,
    agg: AggregatorKind,
    concat: bool,
) -> Result<EmbeddingMatrix> {
    if x.nrows() != op.n() {
        return Err(Error::param(format!(
            "feature matrix has {} rows but the operator is {} x {}",
            x.nrows(),
            op.n(),
            op.n()
        )));
    }
    if agg == AggregatorKind::All {
        let parts = [AggregatorKind::Min, AggregatorKind::Max, AggregatorKind::Avg]
            .into_iter()
            .map(|a| wl_iterate(x, op, h, a, concat))
            .collect::<Result<Vec<_>>>()?;
        return Ok(concat_columns(&parts));
    }
    let mut current = x.clone();
    let mut history = Vec::new();
    for _ in 0..h {
        let next = wl_step(&current, op, agg)?;
        if concat {
            history.push(std::mem::replace(&mut current, next));
        } else {
            current = next;
        }
    }
    if concat {
        history.push(current);
        Ok(concat_columns(&history))
    } else {
        Ok(current)
    }
}

fn avg_step(x: &EmbeddingMatrix, op: &Operator) -> EmbeddingMatrix {
    match x {
        EmbeddingMatrix::Dense(d) => {
            let mut out = op.weights.mul_dense(d).expect("dimensions checked");
            out += d;
            out *= 0.5;
            EmbeddingMatrix::Dense(out)
        }
        other => {
            let csr = other.to_csr();
            let width = csr.ncols();
            let rows: Vec<Vec<(u32, f64)>> = (0..csr.nrows())
                .into_par_iter()
                .map_init(
                    || RowAccumulator::new(width),
                    |acc, v| {
                        let (c, vals) = csr.row(v);
                        acc.add_row(c, vals, 0.5);
                        let (nb, ws) = op.weights.row(v);
                        for (&u, &w) in nb.iter().zip(ws) {
                            let (c, vals) = csr.row(u as usize);
                            acc.add_row(c, vals, 0.5 * w);
                        }
                        acc.drain_sorted()
                    },
                )
                .collect();
            EmbeddingMatrix::Sparse(CsrMatrix::from_sorted_rows(width, rows))
                .densify_above(DENSIFY_FILL)
        }
    }
}

#[derive(Clone, Copy)]
enum Extremum {
    Min,
    Max,
}

impl Extremum {
    #[inline]
    fn pick(self, a: f64, b: f64) -> f64 {
        match self {
            Extremum::Min => a.min(b),
            Extremum::Max => a.max(b),
        }
    }
}

/// `(x_v + reduce_{u in {v} + N(v)} x_u) / 2`, componentwise.
fn extremum_step(x: &EmbeddingMatrix, op: &Operator, which: Extremum) -> EmbeddingMatrix {
    match x {
        EmbeddingMatrix::Dense(d) => {
            let rows: Vec<Vec<f64>> = (0..d.nrows())
                .into_par_iter()
                .map(|v| {
                    let mut red = d.row(v).to_vec();
                    for &u in op.support(v) {
                        for (r, &val) in red.iter_mut().zip(d.row(u as usize)) {
                            *r = which.pick(*r, val);
                        }
                    }
                    red.iter()
                        .zip(d.row(v))
                        .map(|(r, s)| 0.5 * (s + r))
                        .collect()
                })
                .collect();
            let flat = rows.into_iter().flatten().collect();
            EmbeddingMatrix::Dense(
                Array2::from_shape_vec((d.nrows(), d.ncols()), flat).expect("shape preserved"),
            )
        }
        other => {
            let csr = other.to_csr();
            let width = csr.ncols();
            let rows: Vec<Vec<(u32, f64)>> = (0..csr.nrows())
                .into_par_iter()
                .map_init(
                    || (vec![0.0f64; width], vec![0u32; width], Vec::new(), RowAccumulator::new(width)),
                    |(best, count, touched, acc), v| {
                        let support = op.support(v);
                        let members = std::iter::once(v as u32).chain(support.iter().copied().filter(|&u| u as usize != v));
                        let mut size = 0usize;
                        for u in members {
                            size += 1;
                            let (cols, vals) = csr.row(u as usize);
                            for (&c, &val) in cols.iter().zip(vals) {
                                let ci = c as usize;
                                if count[ci] == 0 {
                                    touched.push(c);
                                    best[ci] = val;
                                } else {
                                    best[ci] = which.pick(best[ci], val);
                                }
                                count[ci] += 1;
                            }
                        }
                        // columns missing from some rows see an implicit zero
                        for &c in touched.iter() {
                            let ci = c as usize;
                            let mut r = best[ci];
                            if (count[ci] as usize) < size {
                                r = which.pick(r, 0.0);
                            }
                            acc.add(c, 0.5 * r);
                            count[ci] = 0;
                        }
                        touched.clear();
                        let (cols, vals) = csr.row(v);
                        acc.add_row(cols, vals, 0.5);
                        acc.drain_sorted()
                    },
                )
                .collect();
            EmbeddingMatrix::Sparse(CsrMatrix::from_sorted_rows(width, rows))
                .densify_above(DENSIFY_FILL)
        }
    }
}

fn concat_columns(parts: &[EmbeddingMatrix]) -> EmbeddingMatrix {
    if parts.iter().all(|p| matches!(p, EmbeddingMatrix::Dense(_))) {
        let views: Vec<_> = parts
            .iter()
            .map(|p| match p {
                EmbeddingMatrix::Dense(d) => d.view(),
                _ => unreachable!(),
            })
            .collect();
        return EmbeddingMatrix::Dense(ndarray::concatenate(Axis(1), &views).expect("equal rows"));
    }
    let mut iter = parts.iter();
    let mut acc = iter.next().expect("at least one part").to_csr().into_owned();
    for p in iter {
        acc = acc.hstack(&p.to_csr()).expect("equal rows");
    }
    EmbeddingMatrix::Sparse(acc).densify_above(DENSIFY_FILL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn graph(n: usize, edges: &[(usize, usize)], features: Array2<f64>) -> AttributedGraph {
        assert_eq!(features.nrows(), n);
        AttributedGraph::from_edges(edges.iter().copied(), features, None)
            .unwrap()
            .0
    }

    #[test]
    fn regular_graph_wl_rows() {
        // 4-cycle is 2-regular
        let g = graph(4, &[(0, 1), (1, 2), (2, 3), (3, 0)], Array2::zeros((4, 1)));
        let op = build_operator(&g, NormalizationKind::Wl);
        for v in 0..4 {
            let (_, w) = op.weights().row(v);
            assert_eq!(w, &[0.5, 0.5]);
        }
    }

    #[test]
    fn path_wl_middle_row() {
        let g = graph(3, &[(0, 1), (1, 2)], Array2::zeros((3, 1)));
        let w = build_operator(&g, NormalizationKind::Wl).weights().to_dense();
        assert_eq!(w.row(1).to_vec(), vec![0.5, 0.0, 0.5]);
    }

    #[test]
    fn rw_is_transpose_of_wl() {
        let g = graph(5, &[(0, 1), (1, 2), (1, 3), (3, 4), (2, 3)], Array2::zeros((5, 1)));
        let wl = build_operator(&g, NormalizationKind::Wl).weights().to_dense();
        let rw = build_operator(&g, NormalizationKind::Rw).weights().to_dense();
        assert_eq!(rw, wl.t().to_owned());
    }

    #[test]
    fn one_neighbor_average() {
        let x = array![[1.0, 3.0], [5.0, -1.0]];
        let g = graph(2, &[(0, 1)], x.clone());
        let op = build_operator(&g, NormalizationKind::Wl);
        let out = wl_step(&EmbeddingMatrix::Dense(x), &op, AggregatorKind::Avg).unwrap();
        assert_eq!(out.to_dense().row(0).to_vec(), vec![3.0, 1.0]);
    }

    #[test]
    fn isolated_node_is_fixed() {
        let x = array![[1.0], [2.0], [7.0]];
        let g = graph(3, &[(0, 1)], x.clone());
        for kind in [NormalizationKind::Sym, NormalizationKind::Rw, NormalizationKind::Wl] {
            let op = build_operator(&g, kind);
            for agg in [AggregatorKind::Avg, AggregatorKind::Min, AggregatorKind::Max] {
                let out = wl_iterate(&EmbeddingMatrix::Dense(x.clone()), &op, 3, agg, false).unwrap();
                assert_eq!(out.to_dense()[[2, 0]], 7.0);
            }
        }
    }

    #[test]
    fn shapes_and_identity() {
        let x = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let g = graph(3, &[(0, 1), (1, 2), (0, 2)], x.clone());
        let op = build_operator(&g, NormalizationKind::Wl);
        let e = EmbeddingMatrix::Dense(x.clone());
        assert_eq!(wl_iterate(&e, &op, 0, AggregatorKind::Avg, false).unwrap(), e);
        assert_eq!(wl_iterate(&e, &op, 2, AggregatorKind::Avg, true).unwrap().ncols(), 6);
        assert_eq!(wl_step(&e, &op, AggregatorKind::All).unwrap().ncols(), 6);
        assert_eq!(wl_iterate(&e, &op, 2, AggregatorKind::All, false).unwrap().ncols(), 6);
        let bad = EmbeddingMatrix::Dense(Array2::zeros((2, 2)));
        assert!(wl_step(&bad, &op, AggregatorKind::Avg).is_err());
    }

    #[test]
    fn min_max_on_hand_example() {
        let x = array![[0.0, 4.0], [2.0, 2.0], [6.0, -2.0]];
        let g = graph(3, &[(0, 1), (0, 2)], x.clone());
        let op = build_operator(&g, NormalizationKind::Wl);
        let e = EmbeddingMatrix::Dense(x.clone());
        let mn = wl_step(&e, &op, AggregatorKind::Min).unwrap().to_dense().into_owned();
        let mx = wl_step(&e, &op, AggregatorKind::Max).unwrap().to_dense().into_owned();
        // node 0 with neighbors {1, 2}: min = (0, -2), max = (6, 4)
        assert_eq!(mn.row(0).to_vec(), vec![0.0, 1.0]);
        assert_eq!(mx.row(0).to_vec(), vec![3.0, 4.0]);
        // sparse path agrees with dense path
        let s = EmbeddingMatrix::Sparse(CsrMatrix::from_dense(&x));
        assert_eq!(wl_step(&s, &op, AggregatorKind::Min).unwrap().to_dense().into_owned(), mn);
        assert_eq!(wl_step(&s, &op, AggregatorKind::Max).unwrap().to_dense().into_owned(), mx);
    }

    #[test]
    fn sparse_and_dense_avg_agree() {
        let x = array![[1.0, 0.0, 0.0], [0.0, 0.0, 2.0], [0.0, 3.0, 0.0], [1.0, 0.0, 1.0]];
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)], x.clone());
        for kind in [NormalizationKind::Sym, NormalizationKind::Rw, NormalizationKind::Wl] {
            let op = build_operator(&g, kind);
            let d = wl_iterate(&EmbeddingMatrix::Dense(x.clone()), &op, 3, AggregatorKind::Avg, false)
                .unwrap();
            let s = wl_iterate(
                &EmbeddingMatrix::Sparse(CsrMatrix::from_dense(&x)),
                &op,
                3,
                AggregatorKind::Avg,
                false,
            )
            .unwrap();
            let diff = (&*d.to_dense() - &*s.to_dense()).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b));
            assert!(diff < 1e-14);
        }
    }
}
