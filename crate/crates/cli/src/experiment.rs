//! Experiment drivers behind the subcommands.

use std::path::Path;
use std::time::Instant;

use mwdk::eval::{smoothing_curve, MetricReport, MetricValues, SimilarityCurve};
use mwdk::{
    embed, generate_synthetic, load_graph, perturb_edges, spectral_cluster, AttributedGraph, ClusterAssignment,
    EmbedConfig, EmbeddingMatrix, Method, NoiseSpec, SyntheticSpec,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{DatasetConfig, RunConfig};
use crate::error::{CliError, Result};
use crate::output::sha256_file;

pub struct Dataset {
    pub graph: AttributedGraph,
    pub name: Option<String>,
    /// Where the graph came from, recorded in manifests.
    pub provenance: serde_json::Value,
}

pub fn load_dataset(cfg: &DatasetConfig, seed: u64) -> Result<Dataset> {
    let name = cfg.name();
    match cfg {
        DatasetConfig::Preset(p) => {
            let spec = SyntheticSpec::preset(p, seed)
                .ok_or_else(|| CliError::usage(format!("unknown preset {p:?}")))?;
            Ok(Dataset {
                graph: generate_synthetic(&spec)?,
                name,
                provenance: json!({ "preset": p, "spec": spec }),
            })
        }
        DatasetConfig::Synthetic(spec) => Ok(Dataset {
            graph: generate_synthetic(spec)?,
            name,
            provenance: json!({ "synthetic": spec }),
        }),
        DatasetConfig::Dir(dir) => load_files(
            &dir.join("edges.txt"),
            &dir.join("features.csv"),
            Some(&dir.join("labels.txt")),
            name,
        ),
        DatasetConfig::Files {
            edges,
            features,
            labels,
            ..
        } => load_files(edges, features, labels.as_deref(), name),
    }
}

fn load_files(edges: &Path, features: &Path, labels: Option<&Path>, name: Option<String>) -> Result<Dataset> {
    let loaded = load_graph(edges, features, labels)?;
    let mut files = vec![
        json!({ "path": edges, "sha256": sha256_file(edges)? }),
        json!({ "path": features, "sha256": sha256_file(features)? }),
    ];
    if let Some(l) = labels {
        files.push(json!({ "path": l, "sha256": sha256_file(l)? }));
    }
    Ok(Dataset {
        graph: loaded.graph,
        name,
        provenance: json!({
            "files": files,
            "self_loops_dropped": loaded.report.self_loops,
            "duplicates_dropped": loaded.report.duplicates,
        }),
    })
}

/// One repetition of embed, cluster and score.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub rep: usize,
    pub seed: u64,
    pub metrics: MetricValues,
    pub embed_seconds: f64,
    pub cluster_seconds: f64,
    pub assignment: ClusterAssignment,
    /// Kept only when `output.embeddings` is set.
    pub embedding: Option<EmbeddingMatrix>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<RunRecord>,
    pub report: MetricReport,
}

fn truth(g: &AttributedGraph) -> Result<&[usize]> {
    g.labels()
        .ok_or_else(|| CliError::Core(mwdk::Error::Data("evaluation needs ground-truth labels".into())))
}

pub fn run_once(g: &AttributedGraph, cfg: &RunConfig, rep: usize) -> Result<RunRecord> {
    let labels = truth(g)?;
    let seed = cfg.run_seed(rep);
    let k = match cfg.cluster.k {
        Some(k) => k,
        None => g.num_labels().unwrap_or(0),
    };
    let start = Instant::now();
    let e = embed(g, &cfg.embed_for_run(rep))?;
    let embed_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let assignment = spectral_cluster(&e, &cfg.cluster.resolve(k, seed))?;
    let cluster_seconds = start.elapsed().as_secs_f64();
    if !assignment.empty_clusters().is_empty() {
        log::warn!("run {rep}: empty clusters {:?}", assignment.empty_clusters());
    }
    Ok(RunRecord {
        rep,
        seed,
        metrics: MetricValues::compute_with(assignment.labels(), labels, cfg.eval.nmi)?,
        embed_seconds,
        cluster_seconds,
        assignment,
        embedding: cfg.output.embeddings.then_some(e),
    })
}

/// All repetitions of `cfg` on `g`.
pub fn run_experiment(g: &AttributedGraph, cfg: &RunConfig) -> Result<RunOutcome> {
    let records = (0..cfg.eval.repetitions)
        .into_par_iter()
        .map(|rep| run_once(g, cfg, rep))
        .collect::<Result<Vec<_>>>()?;
    let report = MetricReport::from_runs(records.iter().map(|r| r.metrics).collect())?;
    Ok(RunOutcome { records, report })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub psi: usize,
    pub h: usize,
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
    pub nmi_std: f64,
}

pub fn sweep(g: &AttributedGraph, cfg: &RunConfig, psis: &[usize], hs: &[usize]) -> Result<Vec<SweepRow>> {
    if psis.is_empty() || hs.is_empty() {
        return Err(CliError::usage("the sweep grid must have at least one psi and one h"));
    }
    let mut rows = Vec::with_capacity(psis.len() * hs.len());
    for &psi in psis {
        for &h in hs {
            let mut c = cfg.clone();
            c.embed.ik.psi = psi;
            c.embed.h = h;
            c.validate()?;
            let out = run_experiment(g, &c)?;
            log::info!("psi={psi} h={h} nmi={:.4}", out.report.mean.nmi);
            rows.push(SweepRow {
                psi,
                h,
                acc: out.report.mean.acc,
                nmi: out.report.mean.nmi,
                ari: out.report.mean.ari,
                nmi_std: out.report.std.nmi,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseRow {
    pub interclass_add: usize,
    pub intraclass_remove: usize,
    pub method: String,
    pub h: usize,
    pub status: String,
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub ari: Option<f64>,
}

/// Every `(add, remove)` cell perturbs the original graph with the run
/// seed, then runs each method.
pub fn noise(
    g: &AttributedGraph,
    cfg: &RunConfig,
    adds: &[usize],
    removes: &[usize],
    methods: &[(Method, Option<usize>)],
) -> Result<Vec<NoiseRow>> {
    if adds.is_empty() || removes.is_empty() || methods.is_empty() {
        return Err(CliError::usage("noise grid and method list must be non-empty"));
    }
    let mut rows = Vec::new();
    for &add in adds {
        for &remove in removes {
            let spec = NoiseSpec {
                interclass_add: add,
                intraclass_remove: remove,
                seed: cfg.seed,
            };
            let perturbed = match perturb_edges(g, &spec) {
                Ok(pg) => Some(pg),
                Err(mwdk::Error::Parameter(msg)) => {
                    log::warn!("skipping cell add={add} remove={remove}: {msg}");
                    None
                }
                Err(e) => return Err(e.into()),
            };
            for &(method, h) in methods {
                let c = cfg.with_method(method, h);
                let mut row = NoiseRow {
                    interclass_add: add,
                    intraclass_remove: remove,
                    method: method.to_string(),
                    h: c.embed.h,
                    status: "ok".into(),
                    acc: None,
                    nmi: None,
                    ari: None,
                };
                match &perturbed {
                    Some(pg) => {
                        let out = run_experiment(pg, &c)?;
                        row.acc = Some(out.report.mean.acc);
                        row.nmi = Some(out.report.mean.nmi);
                        row.ari = Some(out.report.mean.ari);
                        log::info!("add={add} remove={remove} {method} nmi={:.4}", out.report.mean.nmi);
                    }
                    None => row.status = "skipped".into(),
                }
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

/// Similarity curves of each method at its tuned configuration.
pub fn smoothing(
    g: &AttributedGraph,
    cfg: &RunConfig,
    h_max: usize,
    methods: &[Method],
) -> Result<Vec<(Method, SimilarityCurve)>> {
    methods
        .iter()
        .map(|&m| {
            let mut e: EmbedConfig = cfg.with_method(m, None).embed;
            e.ik.seed = cfg.seed;
            Ok((m, smoothing_curve(g, &e, h_max)?))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleRow {
    pub n: usize,
    pub m: usize,
    pub method: String,
    pub seconds: f64,
}

/// The EEE generator at `n` nodes with the expected degree of the
/// 2,000-node original.
pub fn scaled_eee(n: usize, seed: u64) -> Result<SyntheticSpec> {
    if n < 2 || n % 2 != 0 {
        return Err(CliError::usage(format!("scale-up sizes must be even and at least 2, got {n}")));
    }
    let base = SyntheticSpec::eee(seed);
    let factor = base.nodes_per_cluster as f64 / (n / 2) as f64;
    Ok(SyntheticSpec {
        nodes_per_cluster: n / 2,
        alpha: base.alpha.map(|a| (a * factor).min(0.5)),
        beta: base.beta * factor,
        ..base
    })
}

/// Embedding wall time per graph size; the fastest of `repeats` runs.
/// Single-threaded unless `parallel`.
pub fn scaleup(
    sizes: &[usize],
    embed_cfg: &EmbedConfig,
    seed: u64,
    repeats: usize,
    parallel: bool,
) -> Result<Vec<ScaleRow>> {
    if sizes.is_empty() {
        return Err(CliError::usage("at least one size is required"));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::usage("sizes must be strictly ascending"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(if parallel { 0 } else { 1 })
        .build()
        .map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    let mut rows = Vec::new();
    for &n in sizes {
        let g = generate_synthetic(&scaled_eee(n, seed)?)?;
        let mut best = f64::INFINITY;
        for _ in 0..repeats.max(1) {
            let secs = pool.install(|| -> Result<f64> {
                let start = Instant::now();
                let e = embed(&g, embed_cfg)?;
                let secs = start.elapsed().as_secs_f64();
                drop(e);
                Ok(secs)
            })?;
            best = best.min(secs);
        }
        log::info!("n={n} m={} {:.3}s", g.m(), best);
        rows.push(ScaleRow {
            n,
            m: g.m(),
            method: embed_cfg.method.to_string(),
            seconds: best,
        });
    }
    Ok(rows)
}

/// Least-squares slope of `log(seconds)` against `log(n)`.
pub fn loglog_slope(rows: &[ScaleRow]) -> Option<f64> {
    if rows.len() < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.n as f64).ln(), r.seconds.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}
