use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sirerag::config::{BackendKind, RunConfig};
use sirerag::pipeline;
use sirerag::pool::{PoolFlags, RetrieverKind};

#[derive(Parser)]
#[command(name = "sirerag", version, about = "Similarity and relatedness tree indexing for multihop QA")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    backend: Option<BackendKind>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    index_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PoolArgs {
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    retriever: Option<RetrieverKind>,
    /// Preset (default, A, B, C, D, similarity-only) or comma-separated origins.
    #[arg(long)]
    pool_flags: Option<PoolFlags>,
}

#[derive(Subcommand)]
enum Command {
    /// Extract, aggregate, build both trees and write the index.
    Build {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Retrieve from the pool; prints JSON.
    Query {
        text: String,
        #[command(flatten)]
        pool: PoolArgs,
    },
    /// Answer a QA file and write report.json.
    Evaluate {
        #[arg(long)]
        qa: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        label: Option<String>,
        /// Answer questions concurrently (TPQ is then not uncontended).
        #[arg(long)]
        parallel: bool,
        #[command(flatten)]
        pool: PoolArgs,
    },
    /// Similarity vs relatedness clustering coverage against question clusters.
    Coverage {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        clusters: Option<PathBuf>,
        #[arg(long, default_value = "coverage.json")]
        out: PathBuf,
    },
    /// TPER between two evaluation reports.
    Compare { report_a: PathBuf, report_b: PathBuf },
    /// Extraction and tree statistics of an index.
    Stats {
        #[arg(long)]
        json: bool,
    },
}

/// Write to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(v: &T) -> anyhow::Result<()> {
    emit(&format!("{}\n", serde_json::to_string_pretty(v)?))
}

fn apply_pool(cfg: &mut RunConfig, p: PoolArgs) {
    if let Some(k) = p.top_k {
        cfg.pool.top_k = k;
    }
    if let Some(r) = p.retriever {
        cfg.pool.retriever = r;
    }
    if let Some(f) = p.pool_flags {
        cfg.pool.flags = f;
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_env();
    if let Some(b) = cli.backend {
        cfg.backend = b;
    }
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    if let Some(d) = cli.index_dir {
        cfg.index_dir = d;
    }
    if cli.cache_dir.is_some() {
        cfg.cache_dir = cli.cache_dir;
    }

    match cli.command {
        Command::Build { corpus } => {
            if corpus.is_some() {
                cfg.corpus = corpus;
            }
            let m = pipeline::cmd_build(&cfg)?;
            let stats = pipeline::cmd_stats(&cfg.index_dir)?;
            emit(&stats.table())?;
            emit(&format!("manifest hash        {}\n", m.hash))?;
        }
        Command::Query { text, pool } => {
            apply_pool(&mut cfg, pool);
            print_json(&pipeline::cmd_query(&cfg, &text)?)?;
        }
        Command::Evaluate {
            qa,
            out,
            label,
            parallel,
            pool,
        } => {
            if qa.is_some() {
                cfg.qa = qa;
            }
            apply_pool(&mut cfg, pool);
            let out = out.unwrap_or_else(|| cfg.index_dir.join(sirerag::evaluation::REPORT_FILE));
            let report = pipeline::cmd_evaluate(&cfg, &out, label.as_deref(), !parallel)?;
            emit(&report.table())?;
            emit(&format!("report               {}\n", out.display()))?;
        }
        Command::Coverage {
            corpus,
            clusters,
            out,
        } => {
            if corpus.is_some() {
                cfg.corpus = corpus;
            }
            if clusters.is_some() {
                cfg.clusters = clusters;
            }
            let report = pipeline::cmd_coverage(&cfg, &out)?;
            emit(&report.table())?;
        }
        Command::Compare { report_a, report_b } => {
            print_json(&pipeline::cmd_compare(&report_a, &report_b)?)?;
        }
        Command::Stats { json } => {
            let s = pipeline::cmd_stats(&cfg.index_dir)?;
            if json {
                print_json(&s)?;
            } else {
                emit(&s.table())?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("SIRERAG_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let _ = emit(&format!("{}\n", serde_json::json!({ "error": format!("{e:#}") })));
            ExitCode::FAILURE
        }
    }
}
