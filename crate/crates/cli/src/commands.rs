//! Subcommand arguments and their execution.

use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use mwdk::{generate_synthetic, IKConfig, Method, SyntheticSpec};
use serde::Serialize;
use serde_json::json;

use crate::config::{DatasetConfig, RunConfig, CANONICAL_SEED};
use crate::error::{CliError, Result};
use crate::experiment::{self, load_dataset, loglog_slope};
use crate::output::{ensure_dir, write_csv, write_text, Manifest};

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset to disk.
    Generate(GenerateArgs),
    /// Embed, cluster and score, repeated with derived seeds.
    Run(RunArgs),
    /// Mean metrics over a psi x h grid.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated psi values.
        #[arg(long = "psi-grid", value_delimiter = ',', required = true)]
        psis: Vec<usize>,
        /// Comma-separated h values.
        #[arg(long = "h-grid", value_delimiter = ',', required = true)]
        hs: Vec<usize>,
    },
    /// NMI of each method after adding or removing edges.
    Noise {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        interclass: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        intraclass: Vec<usize>,
        /// Methods, optionally with h, e.g. `wl:10,wdk,mwdk:3`.
        #[arg(long, value_delimiter = ',', default_value = "wl,wdk,mwdk")]
        methods: Vec<String>,
    },
    /// Community similarity curves over aggregation steps.
    Smoothing {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 20)]
        h_max: usize,
        #[arg(long, value_delimiter = ',', default_value = "wl,wdk,mwdk")]
        methods: Vec<String>,
    },
    /// Embedding time against graph size.
    Scaleup(ScaleupArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// JSON file holding a synthetic generator specification.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Synthetic preset; replaces the configured dataset.
    #[arg(long, conflicts_with = "data")]
    pub preset: Option<String>,
    /// Directory with edges.txt, features.csv and labels.txt.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub h: Option<usize>,
    #[arg(long)]
    pub psi: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    /// Loads the configuration file (if any) and applies command-line
    /// overrides.
    pub fn resolve(&self) -> Result<RunConfig> {
        let dataset = match (&self.preset, &self.data) {
            (Some(p), _) => Some(DatasetConfig::Preset(p.to_ascii_lowercase())),
            (_, Some(d)) => Some(DatasetConfig::Dir(d.clone())),
            _ => None,
        };
        let mut cfg = match (&self.config, dataset.clone()) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(ds)) => RunConfig::for_dataset(ds, self.method.unwrap_or(Method::Mwdk)),
            (None, None) => return Err(CliError::usage("give --config, --preset or --data")),
        };
        if let Some(ds) = dataset {
            cfg.dataset = ds;
        }
        if let Some(m) = self.method {
            cfg = cfg.with_method(m, None);
        }
        if let Some(h) = self.h {
            cfg.embed.h = h;
        }
        if let Some(psi) = self.psi {
            cfg.embed.ik.psi = psi;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(reps) = self.reps {
            cfg.eval.repetitions = reps;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct ScaleupArgs {
    #[arg(long, value_delimiter = ',', default_value = "2000,4000,8000,16000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value = "mwdk")]
    pub method: Method,
    #[arg(long, default_value_t = 3)]
    pub h: usize,
    #[arg(long, default_value_t = 64)]
    pub psi: usize,
    #[arg(long, default_value_t = 100)]
    pub t: usize,
    #[arg(long, default_value_t = CANONICAL_SEED)]
    pub seed: u64,
    /// Timed runs per size; the fastest is reported.
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Time with the full thread pool instead of one thread.
    #[arg(long)]
    pub parallel: bool,
    #[arg(long, default_value = "mwdk-out/scaleup")]
    pub out: PathBuf,
}

pub fn execute(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Sweep { run, psis, hs } => sweep(run, psis, hs),
        Command::Noise {
            run,
            interclass,
            intraclass,
            methods,
        } => noise(run, interclass, intraclass, methods),
        Command::Smoothing { run, h_max, methods } => smoothing(run, *h_max, methods),
        Command::Scaleup(a) => scaleup(a),
    }
}

fn output_dir(cfg: &RunConfig, command: &str) -> Result<PathBuf> {
    let dir = cfg
        .output
        .dir
        .clone()
        .unwrap_or_else(|| Path::new("mwdk-out").join(command));
    ensure_dir(&dir)?;
    Ok(dir)
}

fn config_value(cfg: &RunConfig) -> serde_json::Value {
    serde_json::from_str(&cfg.canonical_json()).expect("round trip")
}

/// Parses `name` or `name:h`.
pub fn parse_method_spec(spec: &str) -> Result<(Method, Option<usize>)> {
    let (name, h) = match spec.split_once(':') {
        Some((n, h)) => {
            let h = h
                .trim()
                .parse()
                .map_err(|_| CliError::usage(format!("bad h in method spec {spec:?}")))?;
            (n, Some(h))
        }
        None => (spec, None),
    };
    let method = name.trim().parse().map_err(|_| CliError::usage(format!("unknown method {name:?}")))?;
    Ok((method, h))
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let spec = match (&a.preset, &a.config) {
        (Some(p), _) => SyntheticSpec::preset(p, a.seed.unwrap_or(CANONICAL_SEED)).ok_or_else(|| {
            CliError::usage(format!(
                "unknown preset {p:?}; expected one of {:?}",
                SyntheticSpec::PRESETS
            ))
        })?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            let mut spec: SyntheticSpec = serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
                path: path.clone(),
                message: format!("at `{}`: {}", e.path(), e.inner()),
            })?;
            if let Some(seed) = a.seed {
                spec.seed = seed;
            }
            spec
        }
        (None, None) => return Err(CliError::usage("give --preset or --config")),
    };
    let g = generate_synthetic(&spec)?;
    ensure_dir(&a.out)?;
    g.save(&a.out)?;
    let spec_value = serde_json::to_value(spec).expect("spec serializes");
    let mut manifest = Manifest::new("generate", spec.seed, spec_value.clone(), json!({ "preset": a.preset }));
    for f in ["edges.txt", "features.csv", "labels.txt"] {
        manifest.add_output(&a.out, &a.out.join(f))?;
    }
    manifest.write(&a.out)?;
    println!("wrote n={} m={} to {}", g.n(), g.m(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct MetricsRow {
    rep: usize,
    seed: u64,
    acc: f64,
    nmi: f64,
    ari: f64,
    embed_seconds: f64,
    cluster_seconds: f64,
}

pub fn run(a: &RunArgs) -> Result<()> {
    let cfg = a.resolve()?;
    let data = load_dataset(&cfg.dataset, cfg.seed)?;
    let out = experiment::run_experiment(&data.graph, &cfg)?;
    let dir = output_dir(&cfg, "run")?;
    let mut manifest = Manifest::new("run", cfg.seed, config_value(&cfg), data.provenance);

    let rows: Vec<MetricsRow> = out
        .records
        .iter()
        .map(|r| MetricsRow {
            rep: r.rep,
            seed: r.seed,
            acc: r.metrics.acc,
            nmi: r.metrics.nmi,
            ari: r.metrics.ari,
            embed_seconds: r.embed_seconds,
            cluster_seconds: r.cluster_seconds,
        })
        .collect();
    let metrics = dir.join("metrics.csv");
    write_csv(&metrics, &rows)?;
    manifest.add_output(&dir, &metrics)?;
    let summary = dir.join("summary.json");
    write_text(
        &summary,
        &(serde_json::to_string_pretty(&out.report).expect("report serializes") + "\n"),
    )?;
    manifest.add_output(&dir, &summary)?;
    if cfg.output.assignments {
        for r in &out.records {
            let path = dir.join(format!("assignment_{:02}.txt", r.rep));
            write_text(&path, &r.assignment.to_text())?;
            manifest.add_output(&dir, &path)?;
        }
    }
    for r in &out.records {
        if let Some(e) = &r.embedding {
            let path = dir.join(format!("embedding_{:02}.txt", r.rep));
            e.write(&path)?;
            manifest.add_output(&dir, &path)?;
        }
    }
    manifest.write(&dir)?;

    let m = out.report.mean;
    println!(
        "{} h={} psi={} reps={}: acc={:.4} nmi={:.4} ari={:.4} (nmi std {:.4})",
        cfg.embed.method,
        cfg.embed.h,
        cfg.embed.ik.psi,
        cfg.eval.repetitions,
        m.acc,
        m.nmi,
        m.ari,
        out.report.std.nmi
    );
    Ok(())
}

pub fn sweep(a: &RunArgs, psis: &[usize], hs: &[usize]) -> Result<()> {
    let cfg = a.resolve()?;
    let data = load_dataset(&cfg.dataset, cfg.seed)?;
    let rows = experiment::sweep(&data.graph, &cfg, psis, hs)?;
    let dir = output_dir(&cfg, "sweep")?;
    let path = dir.join("sweep.csv");
    write_csv(&path, &rows)?;
    let mut manifest = Manifest::new("sweep", cfg.seed, config_value(&cfg), data.provenance);
    manifest.arguments = json!({ "psi": psis, "h": hs });
    manifest.add_output(&dir, &path)?;
    manifest.write(&dir)?;
    for r in &rows {
        println!("psi={:<4} h={:<3} nmi={:.4}", r.psi, r.h, r.nmi);
    }
    Ok(())
}

pub fn noise(a: &RunArgs, adds: &[usize], removes: &[usize], methods: &[String]) -> Result<()> {
    let cfg = a.resolve()?;
    let methods = methods
        .iter()
        .map(|m| parse_method_spec(m))
        .collect::<Result<Vec<_>>>()?;
    let data = load_dataset(&cfg.dataset, cfg.seed)?;
    let rows = experiment::noise(&data.graph, &cfg, adds, removes, &methods)?;
    let dir = output_dir(&cfg, "noise")?;
    let path = dir.join("noise.csv");
    write_csv(&path, &rows)?;
    let mut manifest = Manifest::new("noise", cfg.seed, config_value(&cfg), data.provenance);
    manifest.arguments = json!({
        "interclass": adds,
        "intraclass": removes,
        "methods": methods.iter().map(|(m, h)| json!({ "method": m, "h": h })).collect::<Vec<_>>(),
    });
    manifest.add_output(&dir, &path)?;
    manifest.write(&dir)?;
    for r in &rows {
        match r.nmi {
            Some(nmi) => println!("+{} -{} {}: nmi={nmi:.4}", r.interclass_add, r.intraclass_remove, r.method),
            None => println!("+{} -{} {}: skipped", r.interclass_add, r.intraclass_remove, r.method),
        }
    }
    Ok(())
}

pub fn smoothing(a: &RunArgs, h_max: usize, methods: &[String]) -> Result<()> {
    let cfg = a.resolve()?;
    let methods = methods
        .iter()
        .map(|m| parse_method_spec(m).map(|(m, _)| m))
        .collect::<Result<Vec<_>>>()?;
    let data = load_dataset(&cfg.dataset, cfg.seed)?;
    let curves = experiment::smoothing(&data.graph, &cfg, h_max, &methods)?;
    let dir = output_dir(&cfg, "smoothing")?;
    let mut manifest = Manifest::new("smoothing", cfg.seed, config_value(&cfg), data.provenance);
    manifest.arguments = json!({ "h_max": h_max, "methods": methods });
    for (m, curve) in &curves {
        let path = dir.join(format!("smoothing_{m}.csv"));
        write_text(&path, &curve.to_csv())?;
        manifest.add_output(&dir, &path)?;
        if let Some(last) = curve.s_between.last() {
            println!(
                "{m}: s_between {:.4} -> {:.4} over h = 0..{h_max}",
                curve.s_between[0], last
            );
        }
    }
    manifest.write(&dir)?;
    Ok(())
}

pub fn scaleup(a: &ScaleupArgs) -> Result<()> {
    let mut embed = mwdk::EmbedConfig::new(a.method, a.h, IKConfig::new(a.psi, a.t, a.seed));
    embed.validate()?;
    embed.ik.seed = a.seed;
    let rows = experiment::scaleup(&a.sizes, &embed, a.seed, a.repeats, a.parallel)?;
    ensure_dir(&a.out)?;
    let path = a.out.join("scaleup.csv");
    write_csv(&path, &rows)?;
    let config = serde_json::to_value(embed).expect("config serializes");
    let mut manifest = Manifest::new("scaleup", a.seed, config, json!({ "generator": "eee, constant expected degree" }));
    manifest.arguments = json!({ "sizes": a.sizes, "repeats": a.repeats, "parallel": a.parallel });
    manifest.add_output(&a.out, &path)?;
    manifest.write(&a.out)?;
    for r in &rows {
        println!("n={:<6} m={:<7} {:.3}s", r.n, r.m, r.seconds);
    }
    if let Some(slope) = loglog_slope(&rows) {
        println!("log-log slope {slope:.3}");
    }
    Ok(())
}
