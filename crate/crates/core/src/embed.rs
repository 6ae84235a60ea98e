//! Node embeddings: plain WL aggregation, the weighted distributional kernel
//! (one base feature map followed by `h` aggregation steps in feature space)
//! and its multi-level variant (a fresh Isolation Kernel map before every
//! single aggregation step).

use serde::{Deserialize, Serialize};

use crate::aggregate::{build_operator, wl_iterate, wl_step, AggregatorKind, NormalizationKind, Operator};
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::ikernel::{gk_gram, median_bandwidth, IKConfig, IKModel, SparseBinaryMatrix};
use crate::matrix::EmbeddingMatrix;
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Wl,
    Wdk,
    Mwdk,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Wl, Method::Wdk, Method::Mwdk];

    pub fn name(self) -> &'static str {
        match self {
            Method::Wl => "wl",
            Method::Wdk => "wdk",
            Method::Mwdk => "mwdk",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wl" => Ok(Method::Wl),
            "wdk" => Ok(Method::Wdk),
            "mwdk" => Ok(Method::Mwdk),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseKernel {
    #[default]
    Ik,
    Gk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedConfig {
    pub method: Method,
    /// Aggregation steps for WL/WDK; number of levels minus one for mWDK.
    pub h: usize,
    #[serde(default)]
    pub ik: IKConfig,
    #[serde(default)]
    pub norm: NormalizationKind,
    #[serde(default)]
    pub agg: AggregatorKind,
    #[serde(default)]
    pub concat: bool,
    #[serde(default)]
    pub base_kernel: BaseKernel,
    /// Gaussian bandwidth; the median pairwise distance when absent.
    #[serde(default)]
    pub gk_bandwidth: Option<f64>,
}

impl EmbedConfig {
    pub fn new(method: Method, h: usize, ik: IKConfig) -> Self {
        Self {
            method,
            h,
            ik,
            norm: NormalizationKind::Wl,
            agg: AggregatorKind::Avg,
            concat: false,
            base_kernel: BaseKernel::Ik,
            gk_bandwidth: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_kernel == BaseKernel::Gk && self.method != Method::Wdk {
            return Err(Error::Config(
                "the Gaussian base kernel is only supported for WDK".into(),
            ));
        }
        if self.concat && self.method == Method::Mwdk {
            return Err(Error::Config(
                "mWDK embeds from its final level; concat applies to WL and WDK".into(),
            ));
        }
        if self.method != Method::Wl && (self.ik.psi == 0 || self.ik.t == 0) {
            return Err(Error::Config("psi and t must be at least 1".into()));
        }
        if let Some(bw) = self.gk_bandwidth {
            if !(bw > 0.0) {
                return Err(Error::Config("gk_bandwidth must be positive".into()));
            }
        }
        Ok(())
    }
}

pub fn embed(g: &AttributedGraph, cfg: &EmbedConfig) -> Result<EmbeddingMatrix> {
    match cfg.method {
        Method::Wl => embed_wl(g, cfg),
        Method::Wdk => embed_wdk(g, cfg),
        Method::Mwdk => embed_mwdk(g, cfg),
    }
}

/// `h` aggregation steps on the raw attributes.
pub fn embed_wl(g: &AttributedGraph, cfg: &EmbedConfig) -> Result<EmbeddingMatrix> {
    expect_method(cfg, Method::Wl)?;
    cfg.validate()?;
    let op = build_operator(g, cfg.norm);
    wl_iterate(&EmbeddingMatrix::Dense(g.features().clone()), &op, cfg.h, cfg.agg, cfg.concat)
}

/// One base-kernel feature map of the raw attributes followed by `h`
/// aggregation steps in feature space. With the Gaussian base kernel the
/// feature map is the Gram row `(k(v, x_1), ..., k(v, x_n))`.
pub fn embed_wdk(g: &AttributedGraph, cfg: &EmbedConfig) -> Result<EmbeddingMatrix> {
    expect_method(cfg, Method::Wdk)?;
    cfg.validate()?;
    let op = build_operator(g, cfg.norm);
    let mapped = base_map(g, cfg)?;
    wl_iterate(&mapped, &op, cfg.h, cfg.agg, cfg.concat)
}

fn base_map(g: &AttributedGraph, cfg: &EmbedConfig) -> Result<EmbeddingMatrix> {
    match cfg.base_kernel {
        BaseKernel::Ik => {
            let data = EmbeddingMatrix::Dense(g.features().clone());
            let model = IKModel::fit(&data, &cfg.ik)?;
            Ok(EmbeddingMatrix::Binary(model.transform(&data)?))
        }
        BaseKernel::Gk => {
            let bw = cfg
                .gk_bandwidth
                .unwrap_or_else(|| median_bandwidth(g.features(), cfg.ik.seed));
            Ok(EmbeddingMatrix::Dense(gk_gram(g.features(), bw)?))
        }
    }
}

/// Levels `0..=h`: fit a fresh Isolation Kernel on the current rows, map
/// them, aggregate once. Returns the output of the final level.
pub fn embed_mwdk(g: &AttributedGraph, cfg: &EmbedConfig) -> Result<EmbeddingMatrix> {
    expect_method(cfg, Method::Mwdk)?;
    let mut levels = MwdkLevels::new(g, cfg)?;
    let mut last = None;
    for _ in 0..=cfg.h {
        last = Some(levels.next_level()?.aggregated);
    }
    Ok(last.expect("at least one level"))
}

/// Output of one mWDK level.
#[derive(Debug, Clone)]
pub struct Level {
    pub index: usize,
    /// Feature map of the level's input before aggregation.
    pub mapped: SparseBinaryMatrix,
    /// The level's output, input to the next level.
    pub aggregated: EmbeddingMatrix,
}

/// Stepwise driver for the multi-level embedding. Level `i` fits its
/// Isolation Kernel with a seed derived from the configured seed and `i`, so
/// running more levels never changes the earlier ones.
pub struct MwdkLevels {
    op: Operator,
    current: EmbeddingMatrix,
    ik: IKConfig,
    agg: AggregatorKind,
    next_index: usize,
}

impl MwdkLevels {
    pub fn new(g: &AttributedGraph, cfg: &EmbedConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.base_kernel != BaseKernel::Ik {
            return Err(Error::Config(
                "mWDK requires the Isolation Kernel at every level".into(),
            ));
        }
        Ok(Self {
            op: build_operator(g, cfg.norm),
            current: EmbeddingMatrix::Dense(g.features().clone()),
            ik: cfg.ik,
            agg: cfg.agg,
            next_index: 0,
        })
    }

    pub fn next_level(&mut self) -> Result<Level> {
        let index = self.next_index;
        let ik = self.ik.with_seed(derive_seed(self.ik.seed, index as u64));
        let model = IKModel::fit(&self.current, &ik)?;
        let mapped = model.transform(&self.current)?;
        let aggregated = wl_step(&EmbeddingMatrix::Binary(mapped.clone()), &self.op, self.agg)?;
        self.current = aggregated.clone();
        self.next_index += 1;
        Ok(Level {
            index,
            mapped,
            aggregated,
        })
    }
}

fn expect_method(cfg: &EmbedConfig, method: Method) -> Result<()> {
    if cfg.method != method {
        return Err(Error::Config(format!(
            "configuration is for {} but {} was requested",
            cfg.method, method
        )));
    }
    Ok(())
}
