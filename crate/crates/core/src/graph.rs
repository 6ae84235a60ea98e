//! Attributed graphs: storage, file ingestion, synthetic two-community
//! benchmarks and noise-edge perturbation.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected, unweighted graph with a dense attribute row per node.
///
/// Adjacency is stored once per direction in compressed rows with sorted
/// neighbor lists; self-loops and parallel edges are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    indptr: Vec<usize>,
    neighbors: Vec<u32>,
    features: Array2<f64>,
    labels: Option<Vec<usize>>,
}

/// Counts of edge-list entries discarded while building a graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeReport {
    pub self_loops: usize,
    pub duplicates: usize,
}

impl EdgeReport {
    pub fn dropped(&self) -> usize {
        self.self_loops + self.duplicates
    }
}

impl AttributedGraph {
    /// Builds a graph from an undirected edge list. The node count is the
    /// number of feature rows. Self-loops and repeated pairs (in either
    /// orientation) are dropped and counted.
    pub fn from_edges<I>(
        edges: I,
        features: Array2<f64>,
        labels: Option<Vec<usize>>,
    ) -> Result<(Self, EdgeReport)>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let n = features.nrows();
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Data(format!(
                    "{} labels for {} nodes",
                    l.len(),
                    n
                )));
            }
        }
        let mut report = EdgeReport::default();
        let mut pairs = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::param(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            if u == v {
                report.self_loops += 1;
                continue;
            }
            pairs.push((u.min(v) as u32, u.max(v) as u32));
        }
        let before = pairs.len();
        pairs.sort_unstable();
        pairs.dedup();
        report.duplicates = before - pairs.len();
        Ok((Self::from_canonical_pairs(n, &pairs, features, labels), report))
    }

    /// `pairs` must be sorted, deduplicated and satisfy `u < v`.
    fn from_canonical_pairs(
        n: usize,
        pairs: &[(u32, u32)],
        features: Array2<f64>,
        labels: Option<Vec<usize>>,
    ) -> Self {
        let mut degree = vec![0usize; n];
        for &(u, v) in pairs {
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut indptr = Vec::with_capacity(n + 1);
        indptr.push(0);
        for d in &degree {
            indptr.push(indptr.last().unwrap() + d);
        }
        let mut cursor = indptr[..n].to_vec();
        let mut neighbors = vec![0u32; indptr[n]];
        for &(u, v) in pairs {
            neighbors[cursor[u as usize]] = v;
            cursor[u as usize] += 1;
            neighbors[cursor[v as usize]] = u;
            cursor[v as usize] += 1;
        }
        for u in 0..n {
            neighbors[indptr[u]..indptr[u + 1]].sort_unstable();
        }
        Self {
            indptr,
            neighbors,
            features,
            labels,
        }
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    /// Number of undirected edges.
    pub fn m(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn dims(&self) -> usize {
        self.features.ncols()
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.indptr[v]..self.indptr[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.indptr[v + 1] - self.indptr[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n()).map(|v| self.degree(v)).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Number of distinct ground-truth communities, if labels are present.
    pub fn num_labels(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().copied().collect::<HashSet<_>>().len())
    }

    /// Iterates every undirected edge once as `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .map(move |&v| (u, v as usize))
                .filter(|&(u, v)| u < v)
        })
    }

    /// Full scan of the adjacency for the structural invariants: symmetry,
    /// no self-loops, no parallel edges.
    pub fn is_well_formed(&self) -> bool {
        (0..self.n()).all(|u| {
            let nb = self.neighbors(u);
            nb.windows(2).all(|w| w[0] < w[1])
                && nb
                    .iter()
                    .all(|&v| v as usize != u && self.has_edge(v as usize, u))
        })
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::Data(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.n()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Writes `edges.txt`, `features.csv` and (when labelled) `labels.txt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let edge_path = dir.join("edges.txt");
        write_lines(&edge_path, self.edges().map(|(u, v)| format!("{u} {v}")))?;
        let feature_path = dir.join("features.csv");
        write_lines(
            &feature_path,
            self.features.outer_iter().map(|row| {
                row.iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            }),
        )?;
        if let Some(labels) = &self.labels {
            write_lines(&dir.join("labels.txt"), labels.iter().map(|l| l.to_string()))?;
        }
        Ok(())
    }
}

pub(crate) fn write_lines<I: Iterator<Item = String>>(path: &Path, lines: I) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for line in lines {
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push((i + 1, trimmed.to_string()));
    }
    Ok(out)
}

fn ingest_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Ingestion {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Result of [`load_graph`]: the graph plus what was dropped on the way in.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: AttributedGraph,
    pub report: EdgeReport,
}

/// Reads a whitespace-separated edge list of 0-based node pairs, a headerless
/// CSV feature matrix and an optional one-integer-per-line label file.
pub fn load_graph(
    edge_file: &Path,
    feature_file: &Path,
    label_file: Option<&Path>,
) -> Result<LoadedGraph> {
    let mut rows: Vec<f64> = Vec::new();
    let mut n = 0usize;
    let mut d = None;
    for (line_no, line) in read_lines(feature_file)? {
        let mut width = 0;
        for field in line.split(',') {
            let x: f64 = field.trim().parse().map_err(|_| {
                ingest_err(feature_file, line_no, format!("not a number: {:?}", field.trim()))
            })?;
            if !x.is_finite() {
                return Err(ingest_err(feature_file, line_no, "non-finite feature value"));
            }
            rows.push(x);
            width += 1;
        }
        match d {
            None => d = Some(width),
            Some(w) if w != width => {
                return Err(ingest_err(
                    feature_file,
                    line_no,
                    format!("expected {w} columns, found {width}"),
                ))
            }
            _ => {}
        }
        n += 1;
    }
    let features = Array2::from_shape_vec((n, d.unwrap_or(0)), rows).expect("rectangular rows");

    let labels = match label_file {
        Some(path) => {
            let mut labels = Vec::new();
            for (line_no, line) in read_lines(path)? {
                let l: usize = line
                    .parse()
                    .map_err(|_| ingest_err(path, line_no, format!("not a label: {line:?}")))?;
                labels.push(l);
            }
            if labels.len() != n {
                return Err(Error::Data(format!(
                    "label file {} has {} rows but the feature file has {}",
                    path.display(),
                    labels.len(),
                    n
                )));
            }
            Some(labels)
        }
        None => None,
    };

    let mut edges = Vec::new();
    for (line_no, line) in read_lines(edge_file)? {
        let mut parts = line.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(ingest_err(edge_file, line_no, "expected two node ids"));
        };
        let parse = |s: &str| -> Result<usize> {
            let id: usize = s
                .parse()
                .map_err(|_| ingest_err(edge_file, line_no, format!("not a node id: {s:?}")))?;
            if id >= n {
                return Err(ingest_err(
                    edge_file,
                    line_no,
                    format!("node id {id} out of range for {n} nodes"),
                ));
            }
            Ok(id)
        };
        edges.push((parse(a)?, parse(b)?));
    }

    let (graph, report) = AttributedGraph::from_edges(edges, features, labels)?;
    if report.dropped() > 0 {
        log::warn!(
            "{}: dropped {} self-loop(s) and {} duplicate edge(s)",
            edge_file.display(),
            report.self_loops,
            report.duplicates
        );
    }
    Ok(LoadedGraph { graph, report })
}

/// Parameters of the two-community Gaussian benchmark generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Per-community feature mean, replicated across every dimension.
    pub mu: [f64; 2],
    /// Per-community feature standard deviation.
    pub sigma: [f64; 2],
    /// Within-community edge probability.
    pub alpha: [f64; 2],
    /// Between-community edge probability.
    pub beta: f64,
    pub nodes_per_cluster: usize,
    pub dims: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    fn base(seed: u64) -> Self {
        Self {
            mu: [0.0, 5.0],
            sigma: [10.0, 10.0],
            alpha: [6e-3, 6e-3],
            beta: 6e-4,
            nodes_per_cluster: 1000,
            dims: 100,
            seed,
        }
    }

    /// Equal node density, equal degree, few cross edges.
    pub fn eee(seed: u64) -> Self {
        Self::base(seed)
    }

    /// As `eee` with three times the cross-community edge probability.
    pub fn eeh(seed: u64) -> Self {
        Self {
            beta: 18e-4,
            ..Self::base(seed)
        }
    }

    /// Unequal node density (first community three times more spread).
    pub fn ue(seed: u64) -> Self {
        Self {
            sigma: [30.0, 10.0],
            ..Self::base(seed)
        }
    }

    /// Unequal degree (second community half as densely connected).
    pub fn eu(seed: u64) -> Self {
        Self {
            alpha: [6e-3, 3e-3],
            ..Self::base(seed)
        }
    }

    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "eee" => Some(Self::eee(seed)),
            "eeh" => Some(Self::eeh(seed)),
            "ue" => Some(Self::ue(seed)),
            "eu" => Some(Self::eu(seed)),
            _ => None,
        }
    }

    pub const PRESETS: [&'static str; 4] = ["eee", "eeh", "ue", "eu"];

    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_cluster == 0 {
            return Err(Error::param("nodes_per_cluster must be positive"));
        }
        if self.dims == 0 {
            return Err(Error::param("dims must be positive"));
        }
        if self.alpha.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::param("alpha values must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::param("beta must lie in [0, 1)"));
        }
        if self.beta >= self.alpha[0].min(self.alpha[1]) {
            return Err(Error::param("beta must be below both alpha values"));
        }
        if self.sigma.iter().any(|&s| !(s >= 0.0 && s.is_finite()))
            || self.mu.iter().any(|m| !m.is_finite())
        {
            return Err(Error::param("mu must be finite and sigma non-negative"));
        }
        Ok(())
    }
}

/// Samples a labelled two-community graph. Every pair of nodes receives an
/// independent Bernoulli draw, so the output is exact for the stated model
/// and bit-identical for a fixed seed.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<AttributedGraph> {
    spec.validate()?;
    let per = spec.nodes_per_cluster;
    let n = 2 * per;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let normals = [0, 1]
        .map(|c| Normal::new(spec.mu[c], spec.sigma[c]))
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::param(format!("bad Gaussian parameters: {e}")))?;
    let mut features = Array2::zeros((n, spec.dims));
    for (v, mut row) in features.outer_iter_mut().enumerate() {
        let normal = &normals[v / per];
        row.iter_mut().for_each(|x| *x = normal.sample(&mut rng));
    }

    let labels: Vec<usize> = (0..n).map(|v| v / per).collect();
    let mut pairs = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] {
                spec.alpha[labels[u]]
            } else {
                spec.beta
            };
            if rng.random::<f64>() < p {
                pairs.push((u as u32, v as u32));
            }
        }
    }
    Ok(AttributedGraph::from_canonical_pairs(
        n,
        &pairs,
        features,
        Some(labels),
    ))
}

/// Noise-edge perturbation relative to ground-truth labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Cross-community edges to add.
    pub interclass_add: usize,
    /// Within-community edges to delete.
    pub intraclass_remove: usize,
    pub seed: u64,
}

/// Adds `interclass_add` edges chosen uniformly among absent cross-label
/// pairs and deletes `intraclass_remove` edges chosen uniformly among present
/// same-label edges.
pub fn perturb_edges(g: &AttributedGraph, spec: &NoiseSpec) -> Result<AttributedGraph> {
    let labels = g
        .labels()
        .ok_or_else(|| Error::param("edge perturbation needs ground-truth labels"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let (intra, mut kept): (Vec<(u32, u32)>, Vec<(u32, u32)>) = g
        .edges()
        .map(|(u, v)| (u as u32, v as u32))
        .partition(|&(u, v)| labels[u as usize] == labels[v as usize]);
    if spec.intraclass_remove > intra.len() {
        return Err(Error::param(format!(
            "cannot remove {} intra-community edges: only {} exist",
            spec.intraclass_remove,
            intra.len()
        )));
    }
    let removed: HashSet<usize> = index::sample(&mut rng, intra.len(), spec.intraclass_remove)
        .into_iter()
        .collect();
    kept.extend(
        intra
            .iter()
            .enumerate()
            .filter(|(i, _)| !removed.contains(i))
            .map(|(_, &e)| e),
    );

    let n = g.n();
    let mut sizes = std::collections::HashMap::new();
    for &l in labels {
        *sizes.entry(l).or_insert(0usize) += 1;
    }
    let same_pairs: usize = sizes.values().map(|&s| s * s.saturating_sub(1) / 2).sum();
    let cross_pairs = n * n.saturating_sub(1) / 2 - same_pairs;
    let cross_present = g.m() - intra.len();
    let available = cross_pairs - cross_present;
    if spec.interclass_add > available {
        return Err(Error::param(format!(
            "cannot add {} cross-community edges: only {} pairs are free",
            spec.interclass_add, available
        )));
    }

    let mut added: HashSet<(u32, u32)> = HashSet::with_capacity(spec.interclass_add);
    if spec.interclass_add > 0 && available <= 4 * spec.interclass_add {
        let mut free = Vec::with_capacity(available);
        for u in 0..n {
            for v in (u + 1)..n {
                if labels[u] != labels[v] && !g.has_edge(u, v) {
                    free.push((u as u32, v as u32));
                }
            }
        }
        for i in index::sample(&mut rng, free.len(), spec.interclass_add) {
            added.insert(free[i]);
        }
    } else {
        while added.len() < spec.interclass_add {
            let u = rng.random_range(0..n);
            let v = rng.random_range(0..n);
            if labels[u] == labels[v] || g.has_edge(u, v) {
                continue;
            }
            added.insert((u.min(v) as u32, u.max(v) as u32));
        }
    }
    kept.extend(added);
    kept.sort_unstable();

    Ok(AttributedGraph::from_canonical_pairs(
        n,
        &kept,
        g.features.clone(),
        g.labels.clone(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn path3() -> AttributedGraph {
        let f = array![[0.0, 1.0], [1.0, 0.0], [2.0, 2.0]];
        AttributedGraph::from_edges([(0, 1), (1, 2)], f, Some(vec![0, 0, 1]))
            .unwrap()
            .0
    }

    #[test]
    fn path_graph_degrees() {
        let g = path3();
        assert_eq!(g.m(), 2);
        assert_eq!(g.degrees(), vec![1, 2, 1]);
        assert!(g.is_well_formed());
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn drops_loops_and_duplicates() {
        let f = Array2::zeros((3, 1));
        let (g, report) =
            AttributedGraph::from_edges([(0, 0), (0, 1), (1, 0), (2, 1)], f, None).unwrap();
        assert_eq!(report.self_loops, 1);
        assert_eq!(report.duplicates, 1);
        assert_eq!(g.m(), 2);
    }

    #[test]
    fn rejects_out_of_range_edges_and_label_mismatch() {
        let f = Array2::zeros((2, 1));
        assert!(AttributedGraph::from_edges([(0, 2)], f.clone(), None).is_err());
        assert!(matches!(
            AttributedGraph::from_edges([(0, 1)], f, Some(vec![0])),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn presets_match_parameter_table() {
        let eeh = SyntheticSpec::preset("eeh", 0).unwrap();
        assert_eq!(eeh.beta, 18e-4);
        assert_eq!(eeh.alpha, [6e-3, 6e-3]);
        let ue = SyntheticSpec::preset("UE", 0).unwrap();
        assert_eq!(ue.sigma, [30.0, 10.0]);
        assert_eq!(SyntheticSpec::eu(0).alpha, [6e-3, 3e-3]);
        assert!(SyntheticSpec::preset("xyz", 0).is_none());
    }

    #[test]
    fn spec_validation() {
        let mut s = SyntheticSpec::eee(1);
        s.nodes_per_cluster = 0;
        assert!(generate_synthetic(&s).is_err());
        let mut s = SyntheticSpec::eee(1);
        s.beta = 0.01;
        assert!(s.validate().is_err());
        let mut s = SyntheticSpec::eee(1);
        s.dims = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn zero_beta_has_no_cross_edges() {
        let spec = SyntheticSpec {
            beta: 0.0,
            alpha: [0.05, 0.05],
            nodes_per_cluster: 60,
            dims: 3,
            ..SyntheticSpec::eee(9)
        };
        let g = generate_synthetic(&spec).unwrap();
        let labels = g.labels().unwrap();
        assert!(g.m() > 0);
        assert!(g.edges().all(|(u, v)| labels[u] == labels[v]));
    }

    #[test]
    fn perturbation_identity_and_errors() {
        let g = path3();
        let same = perturb_edges(
            &g,
            &NoiseSpec {
                interclass_add: 0,
                intraclass_remove: 0,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(same, g);
        let too_many = NoiseSpec {
            interclass_add: 0,
            intraclass_remove: 2,
            seed: 3,
        };
        assert!(perturb_edges(&g, &too_many).is_err());
        let unlabeled = AttributedGraph::from_edges([(0, 1)], Array2::zeros((2, 1)), None)
            .unwrap()
            .0;
        assert!(perturb_edges(&unlabeled, &NoiseSpec {
            interclass_add: 0,
            intraclass_remove: 0,
            seed: 0
        })
        .is_err());
    }

    #[test]
    fn exhaustive_removal() {
        // two triangles (3 intra edges each) joined by no cross edges
        let f = Array2::zeros((6, 1));
        let edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)];
        let g = AttributedGraph::from_edges(edges, f, Some(vec![0, 0, 0, 1, 1, 1]))
            .unwrap()
            .0;
        let out = perturb_edges(
            &g,
            &NoiseSpec {
                interclass_add: 9,
                intraclass_remove: 6,
                seed: 11,
            },
        )
        .unwrap();
        // all 9 cross pairs added, all intra edges gone
        assert_eq!(out.m(), 9);
        let labels = out.labels().unwrap();
        assert!(out.edges().all(|(u, v)| labels[u] != labels[v]));
    }
}
