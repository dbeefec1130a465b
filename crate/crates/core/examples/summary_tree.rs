//! Recursive cluster-and-summarize over chunk leaves; prints the tree
//! level by level.

use sirerag::corpus::chunk_corpus;
use sirerag::fixtures::two_hop_fixture;
use sirerag::gateway::Gateway;
use sirerag::tree::{build_tree, tree_tokens, Leaf, TreeConfig, TreeKind};

fn main() -> sirerag::Result<()> {
    let docs = two_hop_fixture().docs;
    let leaves: Vec<Leaf> = chunk_corpus(&docs, 512)?
        .into_iter()
        .map(|c| Leaf { text: c.text, provenance: c.chunk_id })
        .collect();
    let gw = Gateway::mock();
    // hashed mock embeddings are sparse; a small projection lets BIC
    // prefer several clusters per level
    let mut cfg = TreeConfig::default();
    cfg.clustering.target_dim = Some(4);
    let tree = build_tree(&gw, &leaves, TreeKind::Similarity, &cfg)?;

    for (level, ids) in tree.levels.iter().enumerate() {
        println!("level {level}: {} nodes", ids.len());
    }
    for id in tree.levels.last().into_iter().flatten().take(3) {
        let node = tree.node(id).unwrap();
        let text: String = node.text.chars().take(90).collect();
        println!("  {id} <- {} children: {text}...", node.child_ids.len());
    }
    println!(
        "roots {}  promoted {}  fallback {}  tokens {}",
        tree.roots().len(),
        tree.promoted_count(),
        tree.fallback_nodes().len(),
        tree_tokens(&tree)
    );
    Ok(())
}
