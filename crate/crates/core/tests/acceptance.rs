//! Acceptance run: one PASS/FAIL line per criterion, tolerances pinned
//! below. Runs without the libtest harness so the lines always print.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sirerag::aggregation::build_aggregates;
use sirerag::clustering::{cluster, fit_gmm, soft_assign, ClusteringConfig, GmmModel};
use sirerag::config::RunConfig;
use sirerag::corpus::Document;
use sirerag::coverage::{coverage, coverage_report, expand_pairwise, overlap_ratios, QuestionCluster};
use sirerag::embedding::Embedding;
use sirerag::evaluation::{compute_tper, score_em_f1, AnswerRecord, EvalReport};
use sirerag::extraction::Proposition;
use sirerag::fixtures::two_hop_fixture;
use sirerag::gateway::Gateway;
use sirerag::index::save_index;
use sirerag::pipeline::build_index;
use sirerag::pool::{retrieve, Bm25Index, Origin, PoolConfig, PoolEntry, PoolFlags, RetrievalPool};
use sirerag::tree::IndexTree;

const TPER_TOL: f64 = 0.005;
const F1_TOL: f64 = 1e-12;
const LL_SLACK: f64 = 1e-9;
const MIN_ARI: f64 = 0.95;
const SCORE_TOL: f64 = 1e-12;
const BM25_TOL: f64 = 1e-12;
const COVERAGE_TOL: f64 = 1e-9;
const MIN_HIT_GAP_PP: f64 = 30.0;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(started: Instant, budget: Duration) -> Result<(), String> {
    let t = started.elapsed();
    ensure(t < budget, format!("took {t:.2?}, budget {budget:?}"))
}

// ---------------------------------------------------------------- pairwise

fn oracle_pairs(clusters: &[Vec<String>]) -> BTreeSet<(String, String)> {
    let mut out = BTreeSet::new();
    for c in clusters {
        for a in c {
            for b in c {
                if a < b {
                    out.insert((a.clone(), b.clone()));
                }
            }
        }
    }
    out
}

fn pairwise_expansion() -> Check {
    let t = Instant::now();
    let got = expand_pairwise(&[vec!["1", "2", "3"], vec!["3", "5"]]);
    let want: BTreeSet<(String, String)> = [("1", "2"), ("1", "3"), ("2", "3"), ("3", "5")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect();
    ensure(got.iter().cloned().collect::<BTreeSet<_>>() == want, "worked example mismatch")?;

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let items = rng.gen_range(1..=8);
        let n_clusters = rng.gen_range(0..=4);
        let clusters: Vec<Vec<String>> = (0..n_clusters)
            .map(|_| {
                let mut ids: Vec<String> = (0..items).map(|i| format!("d{i}")).collect();
                ids.shuffle(&mut rng);
                ids.truncate(rng.gen_range(0..=items));
                ids
            })
            .collect();
        let got: BTreeSet<_> = expand_pairwise(&clusters).iter().cloned().collect();
        if got != oracle_pairs(&clusters) {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, format!("{mismatches} oracle mismatches"))?;
    within(t, Duration::from_secs(1))?;
    Ok("worked example exact; 1000 random clusterings, 0 mismatches".into())
}

// -------------------------------------------------------------------- TPER

fn report(label: &str, pool_size: usize, tpq: f64) -> EvalReport {
    let records = (0..10)
        .map(|i| AnswerRecord {
            question_id: format!("q{i}"),
            question: String::new(),
            prediction: String::new(),
            gold_answers: vec!["x".into()],
            em: 0,
            f1: 0.0,
            tpq_seconds: tpq,
            retrieved_ids: Vec::new(),
            cached: false,
            timing_valid: true,
            error: None,
        })
        .collect();
    EvalReport::from_records(label, &PoolConfig::default(), pool_size, records)
}

fn tper_arithmetic() -> Check {
    let t = Instant::now();
    // (dataset, TPQ A, TPQ B, pool A, pool B, published TPER)
    let rows = [
        ("MuSiQue", 2.653, 1.560, 35070, 12371, 0.600),
        ("2Wiki", 1.974, 1.437, 19100, 6939, 0.499),
        ("HotpotQA", 2.319, 1.502, 29934, 10031, 0.517),
    ];
    let mut parts = Vec::new();
    for (name, ta, tb, pa, pb, published) in rows {
        let cmp = compute_tper(&report("a", pa, ta), &report("b", pb, tb)).map_err(|e| e.to_string())?;
        ensure(
            (cmp.tper - published).abs() <= TPER_TOL,
            format!("{name}: {:.4} vs {published}", cmp.tper),
        )?;
        parts.push(format!("{name} {:.3}", cmp.tper));
    }
    within(t, Duration::from_secs(1))?;
    Ok(parts.join(", "))
}

// ------------------------------------------------------------------- EM/F1

fn em_f1_reference() -> Check {
    let cases: [(&str, &[&str], u8, f64); 20] = [
        ("Nicholas Bacon", &["Nicholas Bacon"], 1, 1.0),
        ("Sir Nicholas Bacon", &["Nicholas Bacon"], 0, 0.8),
        ("the Beatles", &["Beatles"], 1, 1.0),
        ("Beatles!", &["the beatles."], 1, 1.0),
        ("An Apple", &["apple"], 1, 1.0),
        ("", &["London"], 0, 0.0),
        ("London", &["Paris"], 0, 0.0),
        ("London England", &["London"], 0, 2.0 / 3.0),
        ("London", &["London England"], 0, 2.0 / 3.0),
        ("York House", &["York House", "London"], 1, 1.0),
        ("London", &["York House", "London"], 1, 1.0),
        ("new york city", &["New York"], 0, 0.8),
        ("1948", &["1948"], 1, 1.0),
        ("in 1948", &["1948"], 0, 2.0 / 3.0),
        ("Lord Keeper of the Great Seal", &["Lord Keeper"], 0, 4.0 / 7.0),
        ("bacon bacon", &["bacon"], 0, 2.0 / 3.0),
        ("  spaced   out  ", &["spaced out"], 1, 1.0),
        ("U.S.A.", &["USA"], 1, 1.0),
        ("a", &["the"], 1, 1.0),
        ("the", &["Nicholas"], 0, 0.0),
    ];
    for (pred, golds, em, f1) in cases {
        let golds: Vec<String> = golds.iter().map(|s| s.to_string()).collect();
        let (e, f) = score_em_f1(pred, &golds).map_err(|e| e.to_string())?;
        ensure(
            e == em && (f - f1).abs() <= F1_TOL,
            format!("{pred:?} vs {golds:?}: got ({e}, {f}), want ({em}, {f1})"),
        )?;
    }

    let pieces = ["a", "an", "the", "Bacon", "bacon", "York", ",", ".", "!", " ", "  ", "x", "1948", "Sir", "é"];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gen = |rng: &mut ChaCha8Rng| -> String {
        (0..rng.gen_range(0..6))
            .map(|_| *pieces.choose(rng).unwrap())
            .collect::<Vec<_>>()
            .join(if rng.gen_bool(0.7) { " " } else { "" })
    };
    for _ in 0..10_000 {
        let p = gen(&mut rng);
        let golds: Vec<String> = (0..rng.gen_range(1..3)).map(|_| gen(&mut rng)).collect();
        let (e, f) = score_em_f1(&p, &golds).map_err(|e| e.to_string())?;
        ensure((0.0..=1.0).contains(&f), format!("f1 {f} out of range for {p:?}"))?;
        ensure(e == 0 || f == 1.0, format!("em=1 but f1={f} for {p:?} vs {golds:?}"))?;
    }
    Ok("20 hand cases exact; 10000 fuzzed pairs keep em=1 => f1=1".into())
}

// --------------------------------------------------------------------- GMM

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Adjusted Rand index from the contingency table.
fn ari(a: &[usize], b: &[usize]) -> f64 {
    let c2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    let mut ra: HashMap<usize, usize> = HashMap::new();
    let mut rb: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&v| c2(v)).sum();
    let sa: f64 = ra.values().map(|&v| c2(v)).sum();
    let sb: f64 = rb.values().map(|&v| c2(v)).sum();
    let expected = sa * sb / c2(a.len());
    let max = (sa + sb) / 2.0;
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

fn gmm_correctness() -> Check {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for ds in 0..100 {
        let n = rng.gen_range(10..60);
        let d = rng.gen_range(1..5);
        let blobs = rng.gen_range(1..4);
        let centers: Vec<Vec<f64>> = (0..blobs)
            .map(|_| (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect())
            .collect();
        let data: Vec<Vec<f64>> = (0..n)
            .map(|i| centers[i % blobs].iter().map(|c| c + gauss(&mut rng)).collect())
            .collect();
        let k = rng.gen_range(1..=4usize.min(n));
        let m = fit_gmm(&data, k, ds).map_err(|e| e.to_string())?;
        for w in m.history.windows(2) {
            ensure(
                w[1] >= w[0] - LL_SLACK,
                format!("dataset {ds}: log-likelihood fell {} -> {}", w[0], w[1]),
            )?;
        }
    }

    let mut worst = 1.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let centers = [[0.0, 0.0], [10.0, 0.0], [5.0, 8.0]];
        let mut data = Vec::new();
        let mut truth = Vec::new();
        for (j, c) in centers.iter().enumerate() {
            for _ in 0..50 {
                data.push(vec![c[0] + gauss(&mut rng), c[1] + gauss(&mut rng)]);
                truth.push(j);
            }
        }
        let cfg = ClusteringConfig {
            target_dim: Some(0),
            seed,
            ..ClusteringConfig::default()
        };
        let c = cluster(&data, &cfg).map_err(|e| e.to_string())?;
        let score = ari(&c.assignment.hard_labels(), &truth);
        worst = worst.min(score);
        ensure(score >= MIN_ARI, format!("seed {seed}: ARI {score:.3} with k={}", c.model.k))?;
    }

    let model = GmmModel {
        k: 2,
        means: vec![vec![-2.0, 1.0], vec![2.0, 1.0]],
        variances: vec![vec![1.5, 0.5]; 2],
        weights: vec![0.5, 0.5],
        log_likelihood: 0.0,
        n_iter: 0,
        history: Vec::new(),
    };
    let a = soft_assign(&model, &[vec![0.0, 1.0]], 0.1);
    ensure(a.memberships[0].len() == 2, format!("midpoint memberships {:?}", a.memberships[0]))?;
    ensure((a.responsibilities[0][0] - 0.5).abs() < 1e-12, "midpoint not 0.5/0.5")?;
    within(t, Duration::from_secs(30))?;
    Ok(format!(
        "100 datasets monotone; worst 3-blob ARI {worst:.3} over 20 seeds; midpoint in both"
    ))
}

// ------------------------------------------------------------- aggregation

fn prop_strategy() -> impl Strategy<Value = Vec<Proposition>> {
    let keys = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"];
    prop::collection::vec(
        (0usize..4, 0usize..5, prop::collection::btree_set(0usize..6, 0..4), "[a-z]{1,6}( [a-z]{1,6}){0,4}"),
        0..30,
    )
    .prop_map(move |raw| {
        let mut seq: BTreeMap<usize, usize> = BTreeMap::new();
        raw.into_iter()
            .enumerate()
            .map(|(i, (doc, chunk, ks, text))| {
                let s = seq.entry(doc).or_default();
                *s += 1;
                Proposition {
                    prop_id: format!("doc{doc}::p{i}"),
                    chunk_id: format!("doc{doc}#{chunk}"),
                    doc_id: format!("doc{doc}"),
                    doc_rank: doc,
                    seq_in_doc: *s,
                    text,
                    entity_keys: ks.into_iter().map(|k| keys[k].to_string()).collect(),
                }
            })
            .collect()
    })
}

fn aggregation_invariants() -> Check {
    let mut runner = TestRunner::new(PtConfig {
        cases: 1000,
        failure_persistence: None,
        ..PtConfig::default()
    });
    let strategy = (prop_strategy(), any::<u64>(), prop_oneof![Just(8usize), Just(2048usize)]);
    runner
        .run(&strategy, |(props, shuffle_seed, cap)| {
            let aggs = build_aggregates(&props, cap);
            // multiplicity identity
            let members: usize = aggs.iter().map(|a| a.prop_ids.len()).sum();
            let keys: usize = props.iter().map(|p| p.entity_keys.len()).sum();
            prop_assert_eq!(members, keys);
            // entity-less exclusion
            let entityless: HashSet<&str> = props
                .iter()
                .filter(|p| p.entity_keys.is_empty())
                .map(|p| p.prop_id.as_str())
                .collect();
            for a in &aggs {
                for id in &a.prop_ids {
                    prop_assert!(!entityless.contains(id.as_str()));
                }
            }
            // permutation invariance and in-aggregate order
            let mut shuffled = props.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
            prop_assert_eq!(&build_aggregates(&shuffled, cap), &aggs);
            let pos: HashMap<&str, (usize, usize)> = props
                .iter()
                .map(|p| (p.prop_id.as_str(), (p.doc_rank, p.seq_in_doc)))
                .collect();
            for a in &aggs {
                let order: Vec<_> = a.prop_ids.iter().map(|id| pos[id.as_str()]).collect();
                prop_assert!(order.windows(2).all(|w| w[0] <= w[1]));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("1000 generated proposition sets, 0 failures".into())
}

// -------------------------------------------------------------------- tree

fn fifty_doc_corpus() -> Vec<Document> {
    let people = ["Ada Lowe", "Bram Hale", "Cora Finch", "Dev Arun", "Elin Sato", "Fritz Ober", "Gail Moss"];
    let firms = ["Northwind", "Bluepeak", "Crestline", "Dunmore Works", "Everlight"];
    let cities = ["Oslo", "Lima", "Perth", "Quito", "Riga", "Seoul"];
    (0..50)
        .map(|i| {
            let (p, f, c) = (people[i % 7], firms[i % 5], cities[i % 6]);
            Document {
                doc_id: format!("doc-{i}"),
                title: format!("{p} {i}"),
                text: format!("{p} joined {f} in {}. {f} opened an office in {c}.", 1950 + i),
            }
        })
        .collect()
}

fn check_tree(tree: &IndexTree, leaves: usize) -> Result<(), String> {
    let name = tree.tree.as_str();
    ensure(tree.levels.len() <= 4, format!("{name}: {} levels", tree.levels.len()))?;
    ensure(tree.levels[0].len() == leaves, format!("{name}: {} leaves", tree.levels[0].len()))?;
    let idx = tree.index();
    for n in &tree.nodes {
        ensure(n.tree == tree.tree, format!("{} in wrong tree", n.node_id))?;
        for c in &n.child_ids {
            let child = idx.get(c.as_str()).ok_or(format!("{name}: dangling child {c}"))?;
            ensure(child.level + 1 == n.level, format!("{name}: {} -> {c} skips levels", n.node_id))?;
        }
    }
    for (lvl, ids) in tree.levels.iter().enumerate().skip(1) {
        let covered: HashSet<&str> = ids
            .iter()
            .flat_map(|id| idx[id.as_str()].child_ids.iter().map(String::as_str))
            .collect();
        for below in &tree.levels[lvl - 1] {
            ensure(covered.contains(below.as_str()), format!("{name}: {below} has no parent"))?;
        }
    }
    // every leaf reachable from the top level
    let mut seen: HashSet<&str> = HashSet::new();
    let mut stack: Vec<&str> = tree.roots().iter().map(String::as_str).collect();
    while let Some(id) = stack.pop() {
        if seen.insert(id) {
            stack.extend(idx[id].child_ids.iter().map(String::as_str));
        }
    }
    for leaf in &tree.levels[0] {
        ensure(seen.contains(leaf.as_str()), format!("{name}: leaf {leaf} unreachable"))?;
    }
    Ok(())
}

fn tree_invariants() -> Check {
    let t = Instant::now();
    let docs = fifty_doc_corpus();
    let mut details = Vec::new();
    for target_dim in [None, Some(4)] {
        let mut cfg = RunConfig::default();
        cfg.tree.clustering.target_dim = target_dim;
        let mut hashes = Vec::new();
        for _ in 0..2 {
            let gw = Gateway::mock();
            let mut index = build_index(&gw, &docs, &cfg, None).map_err(|e| e.to_string())?;
            check_tree(&index.sim, 50)?;
            check_tree(&index.rel, index.aggregates.len())?;
            let sim_ids: HashSet<&str> = index.sim.nodes.iter().map(|n| n.node_id.as_str()).collect();
            let rel_ids: HashSet<&str> = index.rel.nodes.iter().map(|n| n.node_id.as_str()).collect();
            let cross = index
                .edges()
                .iter()
                .filter(|e| {
                    let home = match e.tree.as_str() {
                        "similarity" => &sim_ids,
                        _ => &rel_ids,
                    };
                    !(home.contains(e.parent.as_str()) && home.contains(e.child.as_str()))
                })
                .count();
            ensure(cross == 0, format!("{cross} cross-tree edges"))?;
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            save_index(dir.path(), &mut index, &cfg.pool.flags).map_err(|e| e.to_string())?;
            hashes.push(index.manifest.hash.clone());
            if hashes.len() == 1 {
                details.push(format!("{}+{} levels", index.sim.levels.len(), index.rel.levels.len()));
            }
        }
        ensure(hashes[0] == hashes[1], "manifest hash differs between runs")?;
    }
    within(t, Duration::from_secs(60))?;
    Ok(format!("50 leaves, two configs ({}), hashes stable", details.join(", ")))
}

// --------------------------------------------------------------- retrieval

fn cosine_oracle(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn retrieval_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..1000 {
        let n = rng.gen_range(1..=200);
        let dim = rng.gen_range(2..16);
        let entries: Vec<PoolEntry> = (0..n)
            .map(|i| PoolEntry {
                entry_id: format!("e{i:03}"),
                origin: Origin::SimChunk,
                node_id: format!("e{i:03}"),
                text: format!("entry {i}"),
                embedding: Embedding((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()),
            })
            .collect();
        let query: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k = rng.gen_range(1..=n.min(30));
        let mut oracle: Vec<(f64, &str)> = entries
            .iter()
            .map(|e| (cosine_oracle(&query, &e.embedding.0), e.entry_id.as_str()))
            .collect();
        oracle.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        let pool = RetrievalPool::new(entries.clone(), PoolFlags::default()).map_err(|e| e.to_string())?;
        let hits = pool.search_vector(&query, k);
        ensure(hits.len() == k, format!("trial {trial}: {} hits for k={k}", hits.len()))?;
        for (h, (score, id)) in hits.iter().zip(&oracle) {
            ensure(
                h.entry_id == *id && (h.score - score).abs() <= SCORE_TOL,
                format!("trial {trial}: rank {} got {} want {id}", h.rank, h.entry_id),
            )?;
        }
    }

    // single term: "apple" in docs of lengths 2, 2, 4
    let bm = Bm25Index::build(["apple banana", "cherry date", "apple apple cherry fig"]);
    let s = bm.scores("apple");
    ensure((bm.idf("apple") - 0.47000362924573563).abs() <= BM25_TOL, "idf(apple)")?;
    ensure((s[0] - 0.523548346501579).abs() <= BM25_TOL, format!("apple doc0 {}", s[0]))?;
    ensure(s[1] == 0.0, "apple doc1")?;
    ensure((s[2] - 0.5665797174469143).abs() <= BM25_TOL, format!("apple doc2 {}", s[2]))?;
    // length normalization: same tf, the shorter document wins
    let bm = Bm25Index::build(["kiwi", "kiwi pear plum lime", "pear"]);
    let s = bm.scores("kiwi");
    ensure((s[0] - 0.5908617053374963).abs() <= BM25_TOL, format!("kiwi doc0 {}", s[0]))?;
    ensure((s[1] - 0.3335509626905221).abs() <= BM25_TOL, format!("kiwi doc1 {}", s[1]))?;
    Ok("1000 random pools match exhaustive cosine sort; BM25 hand cases exact".into())
}

// -------------------------------------------------------------- end to end

fn two_hop_mechanism() -> Check {
    let t = Instant::now();
    let fx = two_hop_fixture();
    let gw = Gateway::mock();
    let index = build_index(&gw, &fx.docs, &RunConfig::default(), None).map_err(|e| e.to_string())?;
    let rate = |preset: &str| -> Result<f64, String> {
        let cfg = PoolConfig {
            flags: PoolFlags::preset(preset).unwrap(),
            ..PoolConfig::default()
        };
        let pool = index.pool(&cfg.flags).map_err(|e| e.to_string())?;
        let mut hit = 0;
        for q in &fx.questions {
            let hits = retrieve(&gw, &pool, &q.qa.question, &cfg).map_err(|e| e.to_string())?;
            hit += q.answered_in(&hits) as usize;
        }
        Ok(100.0 * hit as f64 / fx.questions.len() as f64)
    };
    let with = rate("default")?;
    let without = rate("similarity-only")?;
    ensure(with > without, format!("aggregates {with}% vs similarity-only {without}%"))?;
    ensure(
        with - without >= MIN_HIT_GAP_PP,
        format!("gap {:.0}pp below {MIN_HIT_GAP_PP}", with - without),
    )?;
    within(t, Duration::from_secs(120))?;
    Ok(format!("bridge hit rate {with:.0}% with aggregates vs {without:.0}% similarity-only"))
}

// ---------------------------------------------------------------- coverage

fn random_clusters(rng: &mut ChaCha8Rng, items: usize) -> Vec<Vec<String>> {
    (0..rng.gen_range(1..5))
        .map(|_| {
            let mut ids: Vec<String> = (0..items).map(|i| format!("p{i}")).collect();
            ids.shuffle(rng);
            ids.truncate(rng.gen_range(0..=items.min(5)));
            ids
        })
        .collect()
}

fn coverage_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    for _ in 0..500 {
        let items = rng.gen_range(2..10);
        let gold_c = random_clusters(&mut rng, items);
        let sim_c = random_clusters(&mut rng, items);
        let rel_c = random_clusters(&mut rng, items);
        let (g, s, r) = (oracle_pairs(&gold_c), oracle_pairs(&sim_c), oracle_pairs(&rel_c));
        let (gs, ss, rs) = (expand_pairwise(&gold_c), expand_pairwise(&sim_c), expand_pairwise(&rel_c));
        if g.is_empty() {
            ensure(coverage(&gs, &ss).is_err(), "empty gold must be undefined")?;
            continue;
        }
        let pct = |a: usize, b: usize| 100.0 * a as f64 / b as f64;
        let cs: BTreeSet<_> = g.intersection(&s).cloned().collect();
        let cr: BTreeSet<_> = g.intersection(&r).cloned().collect();
        let shared = cs.intersection(&cr).count();
        let cov = coverage(&gs, &ss).map_err(|e| e.to_string())?;
        ensure((cov - pct(cs.len(), g.len())).abs() <= COVERAGE_TOL, "similarity coverage")?;
        let cov = coverage(&gs, &rs).map_err(|e| e.to_string())?;
        ensure((cov - pct(cr.len(), g.len())).abs() <= COVERAGE_TOL, "relatedness coverage")?;
        let (at_s, at_r) = overlap_ratios(&gs, &ss, &rs);
        match at_s {
            Ok(v) => ensure(!cs.is_empty() && (v - pct(shared, cs.len())).abs() <= COVERAGE_TOL, "overlap@sim")?,
            Err(_) => ensure(cs.is_empty(), "overlap@sim undefined unexpectedly")?,
        }
        match at_r {
            Ok(v) => ensure(!cr.is_empty() && (v - pct(shared, cr.len())).abs() <= COVERAGE_TOL, "overlap@rel")?,
            Err(_) => ensure(cr.is_empty(), "overlap@rel undefined unexpectedly")?,
        }
        ensure(coverage(&gs, &gs).map_err(|e| e.to_string())? == 100.0, "coverage(gold, gold) != 100")?;

        // the report path over question clusters agrees too
        let gold: Vec<QuestionCluster> = gold_c
            .iter()
            .enumerate()
            .map(|(i, c)| QuestionCluster {
                question_id: format!("q{i}"),
                supporting: c.clone(),
                distractors: Vec::new(),
            })
            .collect();
        let rep = coverage_report(&gold, &sim_c, &rel_c).map_err(|e| e.to_string())?;
        ensure(rep.edges.shared_correct == shared, "report shared edges")?;
        checked += 1;
    }
    Ok(format!("{checked} fixtures with nonempty gold match set algebra; self-coverage 100%"))
}

fn main() {
    let checks: [(&str, fn() -> Check); 9] = [
        ("pairwise expansion exactness", pairwise_expansion),
        ("TPER arithmetic", tper_arithmetic),
        ("EM/F1 reference", em_f1_reference),
        ("GMM correctness", gmm_correctness),
        ("aggregation invariants", aggregation_invariants),
        ("tree invariants", tree_invariants),
        ("retrieval oracle", retrieval_oracle),
        ("two-hop mechanism", two_hop_mechanism),
        ("coverage oracle", coverage_oracle),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let t = Instant::now();
        match check() {
            Ok(detail) => println!("PASS  {name:<30} {detail} [{:.2?}]", t.elapsed()),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<30} {why} [{:.2?}]", t.elapsed());
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
