//! Optimization-free attributed-graph embeddings for community detection.
//!
//! Nodes are embedded by alternating Isolation Kernel feature maps with
//! Weisfeiler-Lehman neighbourhood averaging, then grouped by spectral
//! clustering.

pub mod aggregate;
pub mod cluster;
pub mod embed;
pub mod error;
pub mod eval;
pub mod graph;
pub mod ikernel;
pub mod matrix;
pub mod seed;
pub mod sparse;

pub use aggregate::{build_operator, wl_iterate, wl_step, AggregatorKind, NormalizationKind, Operator};
pub use cluster::{kmeans, spectral_cluster, Affinity, ClusterAssignment, ClusterConfig, Eigensolver};
pub use embed::{embed, BaseKernel, EmbedConfig, Method, MwdkLevels};
pub use error::{Error, Result};
pub use eval::{
    community_similarity, metric_acc, metric_ari, metric_nmi, metric_nmi_with, mu_similar_fraction, smoothing_curve,
    InnerProduct, MetricReport, MetricValues, NmiNormalization, SimilarityCurve,
};
pub use graph::{
    generate_synthetic, load_graph, perturb_edges, AttributedGraph, LoadedGraph, NoiseSpec, SyntheticSpec,
};
pub use ikernel::{ik_similarity, IKConfig, IKModel, SparseBinaryMatrix};
pub use matrix::EmbeddingMatrix;
pub use seed::derive_seed;
pub use sparse::CsrMatrix;
