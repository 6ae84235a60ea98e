//! JSON run configuration.

use std::path::{Path, PathBuf};

use mwdk::cluster::{Affinity, ClusterConfig, Eigensolver};
use mwdk::{EmbedConfig, IKConfig, Method, NmiNormalization, SyntheticSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Seed used by every experiment unless overridden.
pub const CANONICAL_SEED: u64 = 42;

/// Best `h` per dataset and method, as `[wl, wdk, mwdk]`.
const TABLE_H: [(&str, [usize; 3]); 5] = [
    ("eee", [12, 5, 3]),
    ("eeh", [16, 6, 2]),
    ("ue", [8, 3, 2]),
    ("eu", [7, 2, 4]),
    ("cora", [10, 7, 3]),
];

/// Tuned number of aggregation steps for a known dataset.
pub fn tuned_h(dataset: &str, method: Method) -> Option<usize> {
    let name = dataset.to_ascii_lowercase();
    TABLE_H.iter().find(|(d, _)| *d == name).map(|(_, hs)| match method {
        Method::Wl => hs[0],
        Method::Wdk => hs[1],
        Method::Mwdk => hs[2],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetConfig {
    /// A built-in synthetic generator, drawn with the global seed.
    Preset(String),
    Synthetic(SyntheticSpec),
    /// A directory holding `edges.txt`, `features.csv` and `labels.txt`.
    Dir(PathBuf),
    Files {
        edges: PathBuf,
        features: PathBuf,
        #[serde(default)]
        labels: Option<PathBuf>,
        #[serde(default)]
        name: Option<String>,
    },
}

impl DatasetConfig {
    /// Lower-case dataset name used to look up tuned parameters.
    pub fn name(&self) -> Option<String> {
        match self {
            DatasetConfig::Preset(p) => Some(p.to_ascii_lowercase()),
            DatasetConfig::Synthetic(_) => None,
            DatasetConfig::Dir(d) => d
                .file_name()
                .map(|s| s.to_string_lossy().to_ascii_lowercase()),
            DatasetConfig::Files { name, .. } => name.as_ref().map(|n| n.to_ascii_lowercase()),
        }
    }
}

fn default_restarts() -> usize {
    10
}

fn default_max_iter() -> usize {
    300
}

/// Clustering settings. Seeds come from the run seed; `k` defaults to the
/// number of ground-truth labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSection {
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub affinity: Affinity,
    #[serde(default = "default_restarts")]
    pub kmeans_restarts: usize,
    #[serde(default = "default_max_iter")]
    pub kmeans_max_iter: usize,
    #[serde(default)]
    pub eigensolver: Eigensolver,
}

impl Default for ClusterSection {
    fn default() -> Self {
        Self {
            k: None,
            affinity: Affinity::Linear,
            kmeans_restarts: default_restarts(),
            kmeans_max_iter: default_max_iter(),
            eigensolver: Eigensolver::Auto,
        }
    }
}

impl ClusterSection {
    pub fn resolve(&self, k: usize, seed: u64) -> ClusterConfig {
        ClusterConfig {
            k,
            affinity: self.affinity,
            kmeans_restarts: self.kmeans_restarts,
            kmeans_max_iter: self.kmeans_max_iter,
            seed,
            eigensolver: self.eigensolver,
        }
    }
}

fn default_reps() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_reps")]
    pub repetitions: usize,
    #[serde(default)]
    pub nmi: NmiNormalization,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            repetitions: default_reps(),
            nmi: NmiNormalization::default(),
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Write one label file per repetition.
    #[serde(default = "default_true")]
    pub assignments: bool,
    /// Write the embedding of every repetition.
    #[serde(default)]
    pub embeddings: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: None,
            assignments: true,
            embeddings: false,
        }
    }
}

/// A complete experiment description. Repetition `r` runs with seed
/// `seed + r`, which replaces `embed.ik.seed` and seeds the clustering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "canonical_seed")]
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub embed: EmbedConfig,
    #[serde(default)]
    pub cluster: ClusterSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn canonical_seed() -> u64 {
    CANONICAL_SEED
}

impl RunConfig {
    /// Defaults for a named dataset: tuned `h`, `psi = 64`, `t = 100`.
    pub fn for_dataset(dataset: DatasetConfig, method: Method) -> Self {
        let h = dataset
            .name()
            .and_then(|n| tuned_h(&n, method))
            .unwrap_or(match method {
                Method::Wl => 10,
                Method::Wdk => 5,
                Method::Mwdk => 3,
            });
        Self {
            seed: CANONICAL_SEED,
            dataset,
            embed: EmbedConfig::new(method, h, IKConfig::default()),
            cluster: ClusterSection::default(),
            eval: EvalSection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: format!("at `{}`: {}", e.path(), e.inner()),
        })?;
        cfg.validate().map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text, path)
    }

    /// Re-checks every module-level invariant.
    pub fn validate(&self) -> Result<()> {
        self.embed.validate()?;
        if let DatasetConfig::Synthetic(spec) = &self.dataset {
            spec.validate()?;
        }
        if let DatasetConfig::Preset(p) = &self.dataset {
            if SyntheticSpec::preset(p, 0).is_none() {
                return Err(CliError::usage(format!(
                    "unknown preset {p:?}; expected one of {:?}",
                    SyntheticSpec::PRESETS
                )));
            }
        }
        if self.eval.repetitions == 0 {
            return Err(CliError::usage("eval.repetitions must be at least 1"));
        }
        self.cluster.resolve(self.cluster.k.unwrap_or(2), 0).validate()?;
        Ok(())
    }

    /// Canonical JSON used for hashing and manifests.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }

    pub fn run_seed(&self, rep: usize) -> u64 {
        self.seed.wrapping_add(rep as u64)
    }

    pub fn embed_for_run(&self, rep: usize) -> EmbedConfig {
        let mut e = self.embed;
        e.ik.seed = self.run_seed(rep);
        e
    }

    /// The same experiment with another method at its tuned `h` (or the
    /// given one).
    pub fn with_method(&self, method: Method, h: Option<usize>) -> Self {
        let mut out = self.clone();
        out.embed.method = method;
        out.embed.h = h
            .or_else(|| self.dataset.name().and_then(|n| tuned_h(&n, method)))
            .unwrap_or(self.embed.h);
        out
    }
}
