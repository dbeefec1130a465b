//! Rewrite, entity and proposition extraction per chunk, then grouping of
//! propositions by shared entity into aggregates.

use sirerag::aggregation::{aggregate_stats, build_aggregates, DEFAULT_AGGREGATE_TOKEN_CAP};
use sirerag::corpus::chunk_corpus;
use sirerag::extraction::{extract_corpus, filter_entityless};
use sirerag::fixtures::painting_corpus;
use sirerag::gateway::Gateway;

fn main() -> sirerag::Result<()> {
    let docs = painting_corpus();
    let chunks = chunk_corpus(&docs, 512)?;
    let gw = Gateway::mock();
    let out = extract_corpus(&gw, &docs, &chunks, None)?;

    println!("entities:");
    for e in out.entities() {
        println!("  {:<28} {}", e.canonical_name, e.entity_type);
    }
    let props = filter_entityless(out.propositions.clone());
    println!("\npropositions ({} kept of {}):", props.len(), out.propositions.len());
    for p in props.iter().take(4) {
        println!("  {} {:?}", p.text, p.entity_keys);
    }

    let aggs = build_aggregates(&props, DEFAULT_AGGREGATE_TOKEN_CAP);
    println!("\naggregates with more than one member:");
    for a in aggs.iter().filter(|a| a.prop_ids.len() > 1) {
        println!("  {:<24} {}", a.agg_id, a.text);
    }
    let s = aggregate_stats(&aggs);
    println!("\n{} aggregates, {:.2} propositions per entity on average", s.count, s.avg_members);
    Ok(())
}
