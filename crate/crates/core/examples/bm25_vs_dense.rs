//! The same pool searched with dense cosine and with BM25.

use sirerag::config::RunConfig;
use sirerag::fixtures::painting_corpus;
use sirerag::gateway::Gateway;
use sirerag::pipeline::{build_index, query_index};
use sirerag::pool::{PoolConfig, RetrieverKind};

fn main() -> sirerag::Result<()> {
    let gw = Gateway::mock();
    let index = build_index(&gw, &painting_corpus(), &RunConfig::default(), None)?;
    let query = "Which office did the father of Francis Bacon hold?";
    for retriever in [RetrieverKind::Dense, RetrieverKind::Bm25] {
        let cfg = PoolConfig {
            retriever,
            top_k: 4,
            ..PoolConfig::default()
        };
        let out = query_index(&gw, &index, query, &cfg)?;
        println!("{} over {} entries", out.retriever, out.pool_size);
        for h in &out.hits {
            let text: String = h.text.chars().take(70).collect();
            println!("  {:>2} {:>7.3} {:<14} {text}", h.rank, h.score, h.origin.as_str());
        }
    }
    Ok(())
}
