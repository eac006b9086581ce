use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde_json::json;

use strata_core::config::{ConfigError, GatewayMode, RunConfig};
use strata_core::evalbench::{self, QaRecord};
use strata_core::llm_gateway::TokenUsage;
use strata_core::pipeline::{self, Artifacts};
use strata_core::query_engine::Engine;

const DEFAULT_WORKDIR: &str = "strata-work";

#[derive(Parser, Debug)]
#[command(name = "strata", version, about = "Hierarchical community retrieval over a document corpus")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding build artifacts (overrides the config).
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Seed for every randomized stage (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use the offline mock gateway regardless of the config.
    #[arg(long, global = true)]
    mock: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the knowledge graph, community hierarchy and index.
    Build {
        /// Corpus JSONL of {"doc_id", "text"} (overrides the config).
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Answer one question; prints the answer as JSON.
    Query {
        question: String,
        /// Results per layer.
        #[arg(short, long)]
        k: Option<usize>,
    },
    /// Score a JSONL file of {"question", "gold"[, "generated"]} records.
    Eval {
        qa_file: PathBuf,
        #[arg(short, long)]
        k: Option<usize>,
    },
    /// Compare hierarchical search with per-layer HNSW on synthetic data;
    /// prints CSV.
    Bench {
        /// Write bench.csv and bench.svg here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        bottom_size: Option<usize>,
        #[arg(long)]
        queries: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

/// Exit code 1: the invocation or configuration is wrong.
#[derive(Debug)]
struct UsageError(anyhow::Error);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(e: impl Into<anyhow::Error>) -> anyhow::Error {
    UsageError(e.into()).into()
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(usage)?,
        None => RunConfig::default(),
    };
    if let Some(w) = &cli.workdir {
        config.workdir = w.clone();
    }
    if config.workdir.as_os_str().is_empty() {
        config.workdir = PathBuf::from(DEFAULT_WORKDIR);
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
        config.bench.seed = seed;
    }
    if cli.mock {
        config.gateway.mode = GatewayMode::Mock;
    }
    Ok(config)
}

fn print_json(v: serde_json::Value) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &v)?;
    writeln!(out)?;
    Ok(())
}

fn engine_params(config: &RunConfig, k: Option<usize>) -> anyhow::Result<(strata_core::query_engine::QueryParams, usize)> {
    let k = k.unwrap_or(config.query.k);
    if k == 0 {
        return Err(usage(anyhow::anyhow!("k must be >= 1")));
    }
    Ok((config.query.clone(), k))
}

fn cmd_build(mut config: RunConfig, corpus: Option<PathBuf>) -> anyhow::Result<()> {
    if let Some(c) = corpus {
        config.corpus.path = c;
    }
    let gateway = config.gateway().context("gateway setup")?;
    let summary = pipeline::build(&config, &gateway)?;
    let stats = gateway.stats();
    print_json(json!({ "workdir": config.workdir, "summary": summary, "gateway": stats }))
}

fn cmd_query(config: RunConfig, question: &str, k: Option<usize>) -> anyhow::Result<()> {
    let (params, k) = engine_params(&config, k)?;
    let artifacts = Artifacts::load(&config.workdir)?;
    let gateway = config.gateway().context("gateway setup")?;
    let engine = Engine { gateway: &gateway, kg: &artifacts.kg, tree: &artifacts.tree, index: &artifacts.index, params };
    let answer = engine.answer_question(question, k)?;
    print_json(serde_json::to_value(&answer)?)
}

/// Valid records and the number of malformed lines skipped.
fn read_qa(path: &Path) -> anyhow::Result<(Vec<QaRecord>, usize)> {
    let f = std::fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let (mut records, mut skipped) = (Vec::new(), 0);
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<QaRecord>(&line) {
            Ok(r) if !r.gold.trim().is_empty() => records.push(r),
            Ok(_) => {
                log::warn!("{}:{}: empty gold answer, skipped", path.display(), i + 1);
                skipped += 1;
            }
            Err(e) => {
                log::warn!("{}:{}: malformed record skipped: {e}", path.display(), i + 1);
                skipped += 1;
            }
        }
    }
    Ok((records, skipped))
}

fn cmd_eval(config: RunConfig, qa_file: &Path, k: Option<usize>) -> anyhow::Result<()> {
    let (params, k) = engine_params(&config, k)?;
    let (mut records, skipped) = read_qa(qa_file)?;
    if records.is_empty() {
        bail!("{} holds no usable QA records ({skipped} malformed)", qa_file.display());
    }
    let mut usage = TokenUsage::default();
    if records.iter().any(|r| r.generated.trim().is_empty()) {
        let artifacts = Artifacts::load(&config.workdir)?;
        let gateway = config.gateway().context("gateway setup")?;
        let engine =
            Engine { gateway: &gateway, kg: &artifacts.kg, tree: &artifacts.tree, index: &artifacts.index, params };
        for r in records.iter_mut().filter(|r| r.generated.trim().is_empty()) {
            let answer = engine.answer_question(&r.question, k)?;
            usage += answer.usage;
            r.generated = answer.text;
        }
    }
    let n = records.len() as f64;
    let accuracy = records.iter().map(|r| f64::from(evalbench::qa_accuracy(r))).sum::<f64>() / n;
    let recall = records.iter().map(evalbench::qa_recall).sum::<f64>() / n;
    print_json(json!({
        "questions": records.len(),
        "skipped_lines": skipped,
        "accuracy": accuracy,
        "recall": recall,
        "usage": usage,
    }))
}

fn cmd_bench(
    config: RunConfig,
    out: Option<PathBuf>,
    bottom_size: Option<usize>,
    queries: Option<usize>,
    workers: Option<usize>,
) -> anyhow::Result<()> {
    let mut bench = config.bench;
    bench.bottom_size = bottom_size.unwrap_or(bench.bottom_size);
    bench.queries = queries.unwrap_or(bench.queries);
    bench.workers = workers.unwrap_or(bench.workers);
    bench.validate().map_err(usage)?;
    let report = evalbench::run_benchmark(&bench)?;
    let csv = report.to_csv();
    print!("{csv}");
    log::info!(
        "layer sizes {:?}; distance evaluation ratio {:.3}; build {:.0} ms vs {:.0} ms",
        report.layer_sizes,
        report.eval_ratio(),
        report.chnsw_build_ms,
        report.base_build_ms
    );
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("bench.csv"), &csv)?;
        std::fs::write(dir.join("bench.svg"), report.to_svg())?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Build { corpus } => cmd_build(config, corpus),
        Command::Query { question, k } => cmd_query(config, &question, k),
        Command::Eval { qa_file, k } => cmd_eval(config, &qa_file, k),
        Command::Bench { out, bottom_size, queries, workers } => cmd_bench(config, out, bottom_size, queries, workers),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let is_usage = e.downcast_ref::<UsageError>().is_some() || e.downcast_ref::<ConfigError>().is_some();
            ExitCode::from(if is_usage { 1 } else { 2 })
        }
    }
}
