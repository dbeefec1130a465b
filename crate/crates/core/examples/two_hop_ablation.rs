//! Ablate the retrieval pool on the templated two-hop corpus.
//!
//! Every question needs a fact from the artwork document and a fact from
//! the artist document. A hit "bridges" when one retrieved entry carries
//! both, which only entity aggregates can do.

use sirerag::config::RunConfig;
use sirerag::fixtures::two_hop_fixture;
use sirerag::gateway::Gateway;
use sirerag::pipeline::build_index;
use sirerag::pool::{retrieve, PoolConfig, PoolFlags};

fn main() -> sirerag::Result<()> {
    let fx = two_hop_fixture();
    let gw = Gateway::mock();
    let cfg = RunConfig::default();
    let index = build_index(&gw, &fx.docs, &cfg, None)?;

    println!("{:<18} {:>6} {:>10}", "pool", "size", "bridged");
    for preset in ["default", "A", "B", "C", "D", "similarity-only"] {
        let pc = PoolConfig {
            flags: PoolFlags::preset(preset).unwrap(),
            ..PoolConfig::default()
        };
        let pool = index.pool(&pc.flags)?;
        let mut hit = 0;
        for q in &fx.questions {
            let hits = retrieve(&gw, &pool, &q.qa.question, &pc)?;
            if q.answered_in(&hits) {
                hit += 1;
            }
        }
        println!("{:<18} {:>6} {:>7}/{}", preset, pool.len(), hit, fx.questions.len());
    }
    Ok(())
}
