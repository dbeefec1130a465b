//! Two builds with the same corpus, config and seed write identical
//! manifests; a different seed is recorded and changes the hash.

use sirerag::config::RunConfig;
use sirerag::corpus::write_corpus;
use sirerag::fixtures::two_hop_fixture;
use sirerag::pipeline::cmd_build;

fn main() -> anyhow::Result<()> {
    let dir = tempfile_dir()?;
    let corpus = dir.join("corpus.jsonl");
    write_corpus(&corpus, &two_hop_fixture().docs)?;

    let mut hashes = Vec::new();
    for (run, seed) in [(0, 0), (1, 0), (2, 1)] {
        let mut cfg = RunConfig {
            corpus: Some(corpus.clone()),
            index_dir: dir.join(format!("index-{run}")),
            ..RunConfig::default()
        };
        cfg.set_seed(seed);
        let m = cmd_build(&cfg)?;
        println!("run {run} seed {seed}: {}", m.hash);
        hashes.push(m.hash);
    }
    println!("same seed identical: {}", hashes[0] == hashes[1]);
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("sirerag-determinism-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
