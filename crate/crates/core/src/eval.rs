//! Clustering metrics, community similarity curves and over-smoothing
//! measurement.

use std::collections::HashMap;
use std::fmt::Write as _;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aggregate::{build_operator, wl_step};
use crate::embed::{BaseKernel, EmbedConfig, Method, MwdkLevels};
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::ikernel::{gk_gram, median_bandwidth, IKModel};
use crate::matrix::EmbeddingMatrix;

/// Above this many nodes pair statistics are estimated from samples.
pub const EXACT_PAIRS_UP_TO: usize = 2000;
pub const SAMPLED_PAIRS: usize = 1_000_000;

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::param(format!(
            "prediction has {} labels but ground truth has {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::param("cannot score an empty partition"));
    }
    Ok(())
}

/// Relabels to `0..m` in order of first appearance of the sorted ids.
fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let index: HashMap<usize, usize> = ids.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    (labels.iter().map(|l| index[l]).collect(), ids.len())
}

struct Contingency {
    table: Vec<Vec<usize>>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    n: usize,
}

fn contingency(pred: &[usize], truth: &[usize]) -> Contingency {
    let (p, r) = compact(pred);
    let (t, c) = compact(truth);
    let mut table = vec![vec![0usize; c]; r];
    for (&a, &b) in p.iter().zip(&t) {
        table[a][b] += 1;
    }
    let rows = table.iter().map(|row| row.iter().sum()).collect();
    let cols = (0..c).map(|j| table.iter().map(|row| row[j]).sum()).collect();
    Contingency {
        table,
        rows,
        cols,
        n: pred.len(),
    }
}

/// Accuracy under the best one-to-one matching of predicted to true labels.
pub fn metric_acc(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let ct = contingency(pred, truth);
    let size = ct.rows.len().max(ct.cols.len());
    let weights = Matrix::from_fn(size, size, |(i, j)| {
        ct.table.get(i).and_then(|row| row.get(j)).copied().unwrap_or(0) as i64
    });
    let (matched, _) = kuhn_munkres(&weights);
    Ok(matched as f64 / ct.n as f64)
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Denominator of normalized mutual information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmiNormalization {
    #[default]
    Arithmetic,
    Geometric,
    Max,
    Min,
}

impl NmiNormalization {
    fn denominator(self, a: f64, b: f64) -> f64 {
        match self {
            NmiNormalization::Arithmetic => 0.5 * (a + b),
            NmiNormalization::Geometric => (a * b).sqrt(),
            NmiNormalization::Max => a.max(b),
            NmiNormalization::Min => a.min(b),
        }
    }
}

/// Mutual information over the arithmetic mean of the two entropies.
pub fn metric_nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    metric_nmi_with(pred, truth, NmiNormalization::Arithmetic)
}

/// Normalized mutual information. Two single-block partitions score 1; a
/// zero denominator otherwise means zero shared information.
pub fn metric_nmi_with(pred: &[usize], truth: &[usize], norm: NmiNormalization) -> Result<f64> {
    check_lengths(pred, truth)?;
    let ct = contingency(pred, truth);
    let n = ct.n as f64;
    let hp = entropy(&ct.rows, ct.n);
    let ht = entropy(&ct.cols, ct.n);
    if hp + ht == 0.0 {
        return Ok(1.0);
    }
    let denom = norm.denominator(hp, ht);
    if denom == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in ct.table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (ct.rows[i] as f64 * ct.cols[j] as f64)).ln();
            }
        }
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

fn pairs(c: usize) -> f64 {
    let c = c as f64;
    c * (c - 1.0) / 2.0
}

/// Adjusted Rand index. Degenerate cases with no room for disagreement
/// (zero denominator) score 1.
pub fn metric_ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let ct = contingency(pred, truth);
    let index: f64 = ct.table.iter().flatten().map(|&c| pairs(c)).sum();
    let a: f64 = ct.rows.iter().map(|&c| pairs(c)).sum();
    let b: f64 = ct.cols.iter().map(|&c| pairs(c)).sum();
    let total = pairs(ct.n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = a * b / total;
    let max = 0.5 * (a + b);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

impl MetricValues {
    pub fn compute(pred: &[usize], truth: &[usize]) -> Result<Self> {
        Self::compute_with(pred, truth, NmiNormalization::Arithmetic)
    }

    pub fn compute_with(pred: &[usize], truth: &[usize], norm: NmiNormalization) -> Result<Self> {
        Ok(Self {
            acc: metric_acc(pred, truth)?,
            nmi: metric_nmi_with(pred, truth, norm)?,
            ari: metric_ari(pred, truth)?,
        })
    }
}

/// Per-run metrics with their mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub runs: Vec<MetricValues>,
    pub mean: MetricValues,
    pub std: MetricValues,
}

impl MetricReport {
    pub fn from_runs(runs: Vec<MetricValues>) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::param("a report needs at least one run"));
        }
        if runs.iter().any(|r| !(r.acc.is_finite() && r.nmi.is_finite() && r.ari.is_finite())) {
            return Err(Error::Data("non-finite metric value".into()));
        }
        let k = runs.len() as f64;
        let mean_of = |f: fn(&MetricValues) -> f64| runs.iter().map(f).sum::<f64>() / k;
        let mean = MetricValues {
            acc: mean_of(|r| r.acc),
            nmi: mean_of(|r| r.nmi),
            ari: mean_of(|r| r.ari),
        };
        let std_of = |f: fn(&MetricValues) -> f64, m: f64| {
            (runs.iter().map(|r| (f(r) - m).powi(2)).sum::<f64>() / k).sqrt()
        };
        let std = MetricValues {
            acc: std_of(|r| r.acc, mean.acc),
            nmi: std_of(|r| r.nmi, mean.nmi),
            ari: std_of(|r| r.ari, mean.ari),
        };
        Ok(Self { runs, mean, std })
    }
}

/// Kernel `scale * <x, y>` on embedding rows.
///
/// The Isolation Kernel mean embedding uses `scale = 1/t`, which makes
/// `<phi(x), phi(y)>/t` the fraction of shared cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerProduct {
    pub scale: f64,
}

impl InnerProduct {
    pub fn linear() -> Self {
        Self { scale: 1.0 }
    }

    pub fn ik(t: usize) -> Self {
        Self { scale: 1.0 / t as f64 }
    }

    /// Linear kernel on rows rescaled so the longest has unit norm.
    pub fn unit_max_norm(e: &EmbeddingMatrix) -> Self {
        let m = e.max_row_norm();
        Self {
            scale: if m > 0.0 { 1.0 / (m * m) } else { 1.0 },
        }
    }

    pub fn eval(&self, e: &EmbeddingMatrix, i: usize, j: usize) -> f64 {
        self.scale * e.row_dot(i, j)
    }
}

/// Mean kernel value over all `|a| * |b|` member pairs. Passing the same set
/// twice gives the within-community similarity.
pub fn community_similarity(e: &EmbeddingMatrix, a: &[usize], b: &[usize], kernel: InnerProduct) -> Result<f64> {
    check_members(e.nrows(), a, b)?;
    let sa = e.sum_rows(a);
    let sb = e.sum_rows(b);
    let dot: f64 = sa.iter().zip(&sb).map(|(x, y)| x * y).sum();
    Ok(kernel.scale * dot / (a.len() as f64 * b.len() as f64))
}

/// [`community_similarity`] for an arbitrary pairwise kernel.
pub fn community_similarity_with<F>(a: &[usize], b: &[usize], kernel: F) -> Result<f64>
where
    F: Fn(usize, usize) -> f64,
{
    if a.is_empty() || b.is_empty() {
        return Err(Error::param("community member sets must be non-empty"));
    }
    let total: f64 = a.iter().flat_map(|&i| b.iter().map(move |&j| (i, j))).map(|(i, j)| kernel(i, j)).sum();
    Ok(total / (a.len() as f64 * b.len() as f64))
}

fn check_members(n: usize, a: &[usize], b: &[usize]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::param("community member sets must be non-empty"));
    }
    if let Some(&v) = a.iter().chain(b).find(|&&v| v >= n) {
        return Err(Error::param(format!("member {v} out of range for {n} nodes")));
    }
    Ok(())
}

/// Within- and between-community similarity as a function of the number of
/// aggregation steps, with smoothing rates
/// `r_between[h-1] = (s_between[h] - s_between[0]) / h`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimilarityCurve {
    pub h_values: Vec<usize>,
    pub s_within_1: Vec<f64>,
    pub s_within_2: Vec<f64>,
    pub s_between: Vec<f64>,
    /// One entry per `h >= 1`.
    pub r_between: Vec<f64>,
}

pub const CURVE_HEADER: &str = "h,s_c1,s_c2,s_between,r_between";

impl SimilarityCurve {
    pub fn push(&mut self, h: usize, s1: f64, s2: f64, between: f64) {
        if let (Some(&h0), Some(&b0)) = (self.h_values.first(), self.s_between.first()) {
            self.r_between.push((between - b0) / (h - h0) as f64);
        }
        self.h_values.push(h);
        self.s_within_1.push(s1);
        self.s_within_2.push(s2);
        self.s_between.push(between);
    }

    pub fn len(&self) -> usize {
        self.h_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h_values.is_empty()
    }

    /// Rates recomputed from the stored similarities.
    pub fn recomputed_rates(&self) -> Vec<f64> {
        let mut c = SimilarityCurve::default();
        for i in 0..self.len() {
            c.push(self.h_values[i], self.s_within_1[i], self.s_within_2[i], self.s_between[i]);
        }
        c.r_between
    }

    pub fn rate_at(&self, h: usize) -> Option<f64> {
        let pos = self.h_values.iter().position(|&x| x == h)?;
        pos.checked_sub(1).map(|p| self.r_between[p])
    }

    /// CSV with a header row. A curve without any rate (a single point)
    /// writes the header only.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{CURVE_HEADER}").expect("writing to a String");
        if self.r_between.is_empty() {
            return out;
        }
        for i in 0..self.len() {
            let r = if i == 0 { String::new() } else { self.r_between[i - 1].to_string() };
            writeln!(
                out,
                "{},{},{},{},{}",
                self.h_values[i], self.s_within_1[i], self.s_within_2[i], self.s_between[i], r
            )
            .expect("writing to a String");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CURVE_HEADER => {}
            _ => return Err(Error::Data(format!("curve CSV must start with {CURVE_HEADER:?}"))),
        }
        let mut curve = SimilarityCurve::default();
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Data(format!("curve CSV line {}: {what}", idx + 1));
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(bad("expected 5 fields"));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("malformed number"));
            let h = fields[0].trim().parse::<usize>().map_err(|_| bad("malformed h"))?;
            curve.h_values.push(h);
            curve.s_within_1.push(num(fields[1])?);
            curve.s_within_2.push(num(fields[2])?);
            curve.s_between.push(num(fields[3])?);
            if curve.h_values.len() > 1 {
                curve.r_between.push(num(fields[4])?);
            }
        }
        Ok(curve)
    }
}

/// Similarity curve between the two labelled communities of `g` for
/// `h = 0..=h_max` aggregation steps of the configured method.
///
/// WL uses the linear kernel on rows rescaled to unit maximum norm. The
/// Isolation Kernel methods use `<x, y>/t`; WDK with a Gaussian base uses the
/// rescaled linear kernel. For mWDK, `h = 0` is the first level's feature map
/// of the raw attributes and `h >= 1` is the output of level `h - 1`.
pub fn smoothing_curve(g: &AttributedGraph, cfg: &EmbedConfig, h_max: usize) -> Result<SimilarityCurve> {
    let labels = g
        .labels()
        .ok_or_else(|| Error::param("similarity curves need ground-truth labels"))?;
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != 2 {
        return Err(Error::param(format!(
            "similarity curves need exactly 2 communities, found {}",
            ids.len()
        )));
    }
    smoothing_curve_between(g, cfg, h_max, ids[0], ids[1])
}

/// [`smoothing_curve`] for one pair of community labels.
pub fn smoothing_curve_between(
    g: &AttributedGraph,
    cfg: &EmbedConfig,
    h_max: usize,
    c1: usize,
    c2: usize,
) -> Result<SimilarityCurve> {
    cfg.validate()?;
    if cfg.concat {
        return Err(Error::Config("similarity curves follow the last iteration; disable concat".into()));
    }
    let labels = g
        .labels()
        .ok_or_else(|| Error::param("similarity curves need ground-truth labels"))?;
    let members = |c: usize| -> Vec<usize> { (0..g.n()).filter(|&v| labels[v] == c).collect() };
    let (m1, m2) = (members(c1), members(c2));
    if m1.is_empty() || m2.is_empty() {
        return Err(Error::param(format!("communities {c1} and {c2} must both be non-empty")));
    }

    let mut curve = SimilarityCurve::default();
    let mut record = |h: usize, e: &EmbeddingMatrix, kernel: InnerProduct| -> Result<()> {
        curve.push(
            h,
            community_similarity(e, &m1, &m1, kernel)?,
            community_similarity(e, &m2, &m2, kernel)?,
            community_similarity(e, &m1, &m2, kernel)?,
        );
        Ok(())
    };

    match cfg.method {
        Method::Wl | Method::Wdk => {
            let op = build_operator(g, cfg.norm);
            let (mut x, ik) = if cfg.method == Method::Wl {
                (EmbeddingMatrix::Dense(g.features().clone()), None)
            } else if cfg.base_kernel == BaseKernel::Gk {
                let bw = cfg
                    .gk_bandwidth
                    .unwrap_or_else(|| median_bandwidth(g.features(), cfg.ik.seed));
                (EmbeddingMatrix::Dense(gk_gram(g.features(), bw)?), None)
            } else {
                let data = EmbeddingMatrix::Dense(g.features().clone());
                let model = IKModel::fit(&data, &cfg.ik)?;
                (EmbeddingMatrix::Binary(model.transform(&data)?), Some(InnerProduct::ik(cfg.ik.t)))
            };
            for h in 0..=h_max {
                if h > 0 {
                    x = wl_step(&x, &op, cfg.agg)?;
                }
                let kernel = ik.unwrap_or_else(|| InnerProduct::unit_max_norm(&x));
                record(h, &x, kernel)?;
            }
        }
        Method::Mwdk => {
            let kernel = InnerProduct::ik(cfg.ik.t);
            let mut levels = MwdkLevels::new(g, cfg)?;
            let first = levels.next_level()?;
            record(0, &EmbeddingMatrix::Binary(first.mapped), kernel)?;
            if h_max >= 1 {
                record(1, &first.aggregated, kernel)?;
            }
            for h in 2..=h_max {
                record(h, &levels.next_level()?.aggregated, kernel)?;
            }
        }
    }
    Ok(curve)
}

/// Fraction of unordered node pairs whose kernel value is at least `mu`.
/// Exact up to [`EXACT_PAIRS_UP_TO`] nodes, estimated from
/// [`SAMPLED_PAIRS`] uniform pairs beyond.
pub fn mu_similar_fraction(e: &EmbeddingMatrix, mu: f64, kernel: InnerProduct, seed: u64) -> Result<f64> {
    let n = e.nrows();
    check_mu(n, mu)?;
    if n <= EXACT_PAIRS_UP_TO {
        let gram = e.gram();
        let mut hits = 0usize;
        for i in 0..n {
            for j in i + 1..n {
                if kernel.scale * gram[[i, j]] >= mu {
                    hits += 1;
                }
            }
        }
        Ok(hits as f64 / pairs(n))
    } else {
        mu_similar_fraction_with(n, mu, |i, j| kernel.eval(e, i, j), seed)
    }
}

/// [`mu_similar_fraction`] for an arbitrary pairwise kernel.
pub fn mu_similar_fraction_with<F>(n: usize, mu: f64, kernel: F, seed: u64) -> Result<f64>
where
    F: Fn(usize, usize) -> f64,
{
    check_mu(n, mu)?;
    if n <= EXACT_PAIRS_UP_TO {
        let hits = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| kernel(i, j) >= mu)
            .count();
        return Ok(hits as f64 / pairs(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..SAMPLED_PAIRS {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        if kernel(i, j) >= mu {
            hits += 1;
        }
    }
    Ok(hits as f64 / SAMPLED_PAIRS as f64)
}

fn check_mu(n: usize, mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::param(format!("mu must lie in (0, 1], got {mu}")));
    }
    if n < 2 {
        return Err(Error::param("need at least two nodes to form a pair"));
    }
    Ok(())
}

/// Over-smoothing at level `mu`: every pair is `mu`-similar.
pub fn is_over_smoothed(e: &EmbeddingMatrix, mu: f64, kernel: InnerProduct, seed: u64) -> Result<bool> {
    Ok(mu_similar_fraction(e, mu, kernel, seed)? == 1.0)
}
