//! Compare similarity-based and relatedness-based (topic) clustering by the
//! share of gold pairwise passage connections each recovers.

use sirerag::coverage::{coverage_report, expand_pairwise, run_philosophy_clustering, Philosophy, QuestionCluster};
use sirerag::clustering::ClusteringConfig;
use sirerag::fixtures::two_hop_fixture;
use sirerag::gateway::Gateway;

fn main() -> sirerag::Result<()> {
    // worked example: {A,B,C} and {C,D} give four unordered pairs
    let edges = expand_pairwise(&[vec!["A", "B", "C"], vec!["C", "D"]]);
    println!("pairs: {:?}\n", edges.iter().collect::<Vec<_>>());

    let fx = two_hop_fixture();
    let gold: Vec<QuestionCluster> = fx
        .questions
        .iter()
        .map(|q| QuestionCluster {
            question_id: q.qa.question_id.clone(),
            supporting: q.qa.supporting_doc_ids.clone(),
            distractors: Vec::new(),
        })
        .collect();
    let gw = Gateway::mock();
    // a small projection keeps BIC from collapsing 40 passages into one cluster
    let cfg = ClusteringConfig {
        target_dim: Some(4),
        ..ClusteringConfig::default()
    };
    let sim = run_philosophy_clustering(&gw, &fx.docs, Philosophy::Similarity, &cfg)?;
    let rel = run_philosophy_clustering(&gw, &fx.docs, Philosophy::Relatedness, &cfg)?;
    println!("similarity clusters {}  relatedness clusters {}", sim.clusters.len(), rel.clusters.len());
    let report = coverage_report(&gold, &sim.clusters, &rel.clusters)?;
    print!("{}", report.table());
    Ok(())
}
