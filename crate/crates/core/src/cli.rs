//! Command-line entry point.
//!
//! Exit codes: 0 on success, 1 on a runtime error, 2 on a usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::baselines::{run_baseline, Baseline};
use crate::condense::{condense, CondenseOutput, CondenserConfig};
use crate::error::{Error, Result};
use crate::eval::{condensed_stats, emit_report, evaluate, graph_stats, ReportRun};
use crate::graph_io::{
    generate_sbm, load_condensed, load_graph, save_condensed, save_graph, write_atomic, SbmParams,
};
use crate::models::{Arch, TrainHyper};

#[derive(Debug, Parser)]
#[command(
    name = "gcondense",
    version,
    about = "Joint node and feature graph condensation"
)]
struct Cli {
    /// Worker threads for parallel evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Raise log verbosity (-v info, -vv per-epoch debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a stochastic-block-model dataset.
    Synth(SynthArgs),
    /// Learn a condensed graph.
    Condense(CondenseArgs),
    /// Run a reference condensation pipeline.
    Baseline(BaselineArgs),
    /// Evaluate a condensed graph on the original graph.
    Evaluate(EvaluateArgs),
    /// Print graph statistics as JSON.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    nodes: usize,
    #[arg(long)]
    classes: usize,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    p_in: f64,
    #[arg(long)]
    p_out: f64,
    #[arg(long)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CondenseArgs {
    #[arg(long)]
    data: PathBuf,
    /// JSON config; every key optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config file's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_parser = parse_baseline)]
    method: Baseline,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    condensed: PathBuf,
    /// Comma-separated architectures: sgc, gcn, mlp, gat.
    #[arg(long, value_delimiter = ',', value_parser = parse_arch, default_value = "gcn")]
    arch: Vec<Arch>,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    /// First evaluation seed; run i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Overrides the training epochs of every architecture.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// A condensed directory instead of a dataset.
    #[arg(long)]
    condensed: Option<PathBuf>,
    /// Also write the JSON here, with a manifest next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_baseline(s: &str) -> std::result::Result<Baseline, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_arch(s: &str) -> std::result::Result<Arch, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Provenance written next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub engine_version: String,
    pub started_at: u64,
    pub finished_at: u64,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    fn new(command: &str, args: &[String]) -> Self {
        RunManifest {
            command: command.to_string(),
            args: args.to_vec(),
            method: None,
            config: serde_json::Value::Null,
            seed: None,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: now(),
            finished_at: 0,
        }
    }

    fn input(mut self, name: &str, path: &Path) -> Self {
        self.inputs
            .insert(name.to_string(), path.display().to_string());
        self
    }

    fn write(mut self, path: &Path) -> Result<()> {
        self.finished_at = now();
        write_atomic(path, serde_json::to_string_pretty(&self)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Config file (if any) with the `--seed` override applied on top.
fn resolve_config(path: Option<&Path>, seed: Option<u64>) -> Result<CondenserConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            CondenserConfig::from_json_str(&text)?
        }
        None => CondenserConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_condensed(
    out: &CondenseOutput,
    dir: &Path,
    mut manifest: RunManifest,
    cfg: &CondenserConfig,
) -> Result<()> {
    save_condensed(&out.condensed, &out.phi, dir)?;
    write_atomic(
        &dir.join("loss_history.csv"),
        out.history.to_csv().as_bytes(),
    )?;
    manifest.config = serde_json::to_value(cfg)?;
    manifest.seed = Some(cfg.seed);
    manifest.outputs = [
        "features.csv",
        "adjacency.csv",
        "labels.txt",
        "meta.json",
        "params.json",
        "loss_history.csv",
    ]
    .iter()
    .map(|f| dir.join(f).display().to_string())
    .collect();
    manifest.write(&dir.join("manifest.json"))
}

fn dataset_name(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

fn execute(cli: Cli, args: &[String]) -> Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let params = SbmParams {
                num_nodes: a.nodes,
                num_classes: a.classes,
                dim: a.dim,
                p_in: a.p_in,
                p_out: a.p_out,
                feature_noise: a.noise,
                seed: a.seed,
            };
            let g = generate_sbm(&params)?;
            save_graph(&g, &a.out)?;
            let mut m = RunManifest::new("synth", args);
            m.config = serde_json::to_value(&params)?;
            m.seed = Some(a.seed);
            m.outputs = vec![a.out.display().to_string()];
            m.write(&a.out.join("manifest.json"))
        }
        Command::Condense(a) => {
            let cfg = resolve_config(a.config.as_deref(), a.seed)?;
            let g = load_graph(&a.data)?;
            let out = condense(&g, &cfg)?;
            let mut m = RunManifest::new("condense", args).input("data", &a.data);
            m.method = Some("joint".into());
            if let Some(c) = &a.config {
                m = m.input("config", c);
            }
            write_condensed(&out, &a.out, m, &cfg)
        }
        Command::Baseline(a) => {
            let cfg = resolve_config(a.config.as_deref(), a.seed)?;
            let g = load_graph(&a.data)?;
            let out = run_baseline(&g, &cfg, a.method)?;
            let mut m = RunManifest::new("baseline", args).input("data", &a.data);
            m.method = Some(a.method.name().into());
            if let Some(c) = &a.config {
                m = m.input("config", c);
            }
            write_condensed(&out, &a.out, m, &cfg)
        }
        Command::Evaluate(a) => {
            if a.runs == 0 {
                return Err(Error::Config("--runs must be at least 1".into()));
            }
            let g = load_graph(&a.data)?;
            let (cg, phi) = load_condensed(&a.condensed)?;
            let origin = RunManifest::load(&a.condensed.join("manifest.json")).ok();
            let method = origin
                .as_ref()
                .and_then(|m| m.method.clone())
                .unwrap_or_else(|| "unknown".into());
            let ratio = |key: &str| {
                origin
                    .as_ref()
                    .and_then(|m| m.config.get(key))
                    .and_then(|v| v.as_f64())
                    .unwrap_or(f64::NAN)
            };
            let seeds: Vec<u64> = (0..a.runs as u64).map(|i| a.seed + i).collect();
            let stats = condensed_stats(&cg, Some(&phi));
            let mut runs = Vec::new();
            for arch in &a.arch {
                let mut hyper = TrainHyper::for_arch(*arch);
                if let Some(e) = a.epochs {
                    hyper.epochs = e;
                }
                let r = evaluate(&cg, &phi, &g, *arch, &seeds, &hyper)?;
                log::info!("{arch}: {:.4} ± {:.4}", r.mean, r.std);
                runs.push(ReportRun {
                    method: method.clone(),
                    dataset: dataset_name(&a.data),
                    arch: arch.name().into(),
                    r_n: ratio("r_n"),
                    r_d: ratio("r_d"),
                    seeds: r.seeds,
                    accs: r.accs,
                    mean: r.mean,
                    std: r.std,
                    stats: stats.clone(),
                    fingerprint: r.fingerprint,
                });
            }
            emit_report(&runs, &a.out)?;
            let mut m = RunManifest::new("evaluate", args)
                .input("data", &a.data)
                .input("condensed", &a.condensed);
            m.seed = Some(a.seed);
            m.config = serde_json::json!({ "arch": a.arch, "runs": a.runs, "epochs": a.epochs });
            m.outputs = vec![
                a.out.display().to_string(),
                a.out.with_extension("csv").display().to_string(),
            ];
            m.write(&a.out.with_extension("manifest.json"))
        }
        Command::Stats(a) => {
            let (stats, input) = match (&a.data, &a.condensed) {
                (Some(d), None) => (graph_stats(&load_graph(d)?), ("data", d)),
                (None, Some(c)) => {
                    let (cg, phi) = load_condensed(c)?;
                    (condensed_stats(&cg, Some(&phi)), ("condensed", c))
                }
                _ => {
                    return Err(Error::Config(
                        "give exactly one of --data or --condensed".into(),
                    ))
                }
            };
            let json = serde_json::to_string(&stats)?;
            println!("{json}");
            if let Some(out) = &a.out {
                write_atomic(out, json.as_bytes())?;
                let mut m = RunManifest::new("stats", args).input(input.0, input.1);
                m.outputs = vec![out.display().to_string()];
                m.write(&out.with_extension("manifest.json"))?;
            }
            Ok(())
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    if let Some(n) = cli.threads {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let args: Vec<String> = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match execute(cli, &args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            1
        }
    }
}
