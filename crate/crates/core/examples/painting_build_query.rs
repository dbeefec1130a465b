//! Build an index from a corpus file, query it, evaluate and print stats,
//! the same path the `sirerag` binary takes.
//!
//!     cargo run --example painting_build_query [-- <out-dir>]

use std::path::PathBuf;

use sirerag::config::RunConfig;
use sirerag::corpus::{qa_to_jsonl, write_corpus};
use sirerag::fixtures::{painting_corpus, painting_questions};
use sirerag::pipeline;

fn main() -> anyhow::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("sirerag-painting"));
    std::fs::create_dir_all(&dir)?;
    let corpus = dir.join("corpus.jsonl");
    let qa = dir.join("qa.jsonl");
    write_corpus(&corpus, &painting_corpus())?;
    std::fs::write(&qa, qa_to_jsonl(&painting_questions())?)?;

    let cfg = RunConfig {
        corpus: Some(corpus),
        qa: Some(qa),
        index_dir: dir.join("index"),
        cache_dir: Some(dir.join("cache")),
        ..RunConfig::default()
    };
    let manifest = pipeline::cmd_build(&cfg)?;
    print!("{}", pipeline::cmd_stats(&cfg.index_dir)?.table());
    println!("hash {}\n", manifest.hash);

    let out = pipeline::cmd_query(&cfg, "Who is the father of the artist who painted Head I?")?;
    for h in out.hits.iter().take(5) {
        println!("{:>2} {:<14} {:.3} {}", h.rank, h.origin.as_str(), h.score, h.entry_id);
    }
    println!();

    let report = pipeline::cmd_evaluate(&cfg, &dir.join("report.json"), None, true)?;
    print!("{}", report.table());
    for r in &report.records {
        println!("{} {:?} em={} f1={:.2}", r.question_id, r.prediction, r.em, r.f1);
    }
    Ok(())
}
