//! Entity-keyed proposition aggregates: the leaves of the relatedness tree.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::extraction::Proposition;
use crate::text::count_tokens;

pub const DEFAULT_AGGREGATE_TOKEN_CAP: usize = 2048;
pub const AGGREGATES_FILE: &str = "aggregates.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropositionAggregate {
    pub agg_id: String,
    pub entity_key: String,
    pub prop_ids: Vec<String>,
    pub text: String,
    pub member_doc_ids: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub count: usize,
    pub entities: usize,
    pub avg_members: f64,
    pub max_members: usize,
    pub min_members: usize,
}

fn sentence(text: &str) -> String {
    let t = text.trim();
    if t.ends_with(['.', '!', '?']) {
        t.to_string()
    } else {
        format!("{t}.")
    }
}

/// Group propositions by entity key.
///
/// A proposition with several keys joins each of their aggregates. Members
/// are ordered by document (corpus order) and then by position in the
/// document, so the result does not depend on input order. Aggregates longer
/// than `token_cap` tokens are split at proposition boundaries into parts
/// `agg:<key>`, `agg:<key>#2`, ... that share the entity key. Output is
/// sorted by entity key.
///
/// Propositions without entity keys are ignored; run
/// [`crate::extraction::filter_entityless`] first to make that explicit.
pub fn build_aggregates(props: &[Proposition], token_cap: usize) -> Vec<PropositionAggregate> {
    let mut groups: BTreeMap<&str, Vec<&Proposition>> = BTreeMap::new();
    for p in props {
        let keys: BTreeSet<&str> = p.entity_keys.iter().map(String::as_str).collect();
        for k in keys {
            groups.entry(k).or_default().push(p);
        }
    }
    let mut out = Vec::new();
    for (key, mut members) in groups {
        members.sort_by(|a, b| {
            (a.doc_rank, &a.doc_id, a.seq_in_doc, &a.prop_id)
                .cmp(&(b.doc_rank, &b.doc_id, b.seq_in_doc, &b.prop_id))
        });
        let mut parts: Vec<Vec<&Proposition>> = vec![Vec::new()];
        let mut used = 0usize;
        for m in members {
            let cost = count_tokens(&sentence(&m.text));
            let current = parts.last_mut().expect("nonempty");
            if !current.is_empty() && used + cost > token_cap {
                parts.push(vec![m]);
                used = cost;
            } else {
                current.push(m);
                used += cost;
            }
        }
        for (i, part) in parts.into_iter().enumerate() {
            let agg_id = if i == 0 {
                format!("agg:{key}")
            } else {
                format!("agg:{key}#{}", i + 1)
            };
            out.push(PropositionAggregate {
                agg_id,
                entity_key: key.to_string(),
                prop_ids: part.iter().map(|p| p.prop_id.clone()).collect(),
                text: part
                    .iter()
                    .map(|p| sentence(&p.text))
                    .collect::<Vec<_>>()
                    .join(" "),
                member_doc_ids: part.iter().map(|p| p.doc_id.clone()).collect(),
            });
        }
    }
    out
}

/// Count and per-entity member statistics. Split parts are merged back
/// per entity for the avg/max/min figures.
pub fn aggregate_stats(aggs: &[PropositionAggregate]) -> AggregateStats {
    let mut per_entity: BTreeMap<&str, usize> = BTreeMap::new();
    for a in aggs {
        *per_entity.entry(a.entity_key.as_str()).or_default() += a.prop_ids.len();
    }
    if per_entity.is_empty() {
        return AggregateStats::default();
    }
    let sizes: Vec<usize> = per_entity.values().copied().collect();
    AggregateStats {
        count: aggs.len(),
        entities: sizes.len(),
        avg_members: sizes.iter().sum::<usize>() as f64 / sizes.len() as f64,
        max_members: *sizes.iter().max().unwrap(),
        min_members: *sizes.iter().min().unwrap(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prop(doc: &str, rank: usize, seq: usize, text: &str, keys: &[&str]) -> Proposition {
        Proposition {
            prop_id: format!("{doc}::p{seq}"),
            chunk_id: format!("{doc}::0"),
            doc_id: doc.into(),
            doc_rank: rank,
            seq_in_doc: seq,
            text: text.into(),
            entity_keys: keys.iter().map(|k| k.to_string()).collect(),
        }
    }

    #[test]
    fn shared_member_joins_both() {
        let props = vec![
            prop("d", 0, 0, "e1 is here", &["e1"]),
            prop("d", 0, 1, "e1 met e2.", &["e1", "e2"]),
        ];
        let aggs = build_aggregates(&props, DEFAULT_AGGREGATE_TOKEN_CAP);
        assert_eq!(aggs.len(), 2);
        assert_eq!(aggs[0].agg_id, "agg:e1");
        assert_eq!(aggs[0].prop_ids, vec!["d::p0", "d::p1"]);
        assert_eq!(aggs[0].text, "e1 is here. e1 met e2.");
        assert_eq!(aggs[1].prop_ids, vec!["d::p1"]);
    }

    #[test]
    fn order_follows_documents_not_input() {
        let mut props = vec![
            prop("b", 1, 0, "x two", &["x"]),
            prop("a", 0, 1, "x one", &["x"]),
            prop("a", 0, 0, "x zero", &["x"]),
        ];
        let forward = build_aggregates(&props, 100);
        props.reverse();
        assert_eq!(build_aggregates(&props, 100), forward);
        assert_eq!(forward[0].prop_ids, vec!["a::p0", "a::p1", "b::p0"]);
    }

    #[test]
    fn cap_splits_at_member_boundaries() {
        let props: Vec<_> = (0..4)
            .map(|i| prop("d", 0, i, "k appears in this sentence", &["k"]))
            .collect();
        // each member is 6 tokens with its period
        let aggs = build_aggregates(&props, 12);
        let ids: Vec<_> = aggs.iter().map(|a| a.agg_id.as_str()).collect();
        assert_eq!(ids, vec!["agg:k", "agg:k#2"]);
        assert!(aggs.iter().all(|a| a.prop_ids.len() == 2 && a.entity_key == "k"));
        let stats = aggregate_stats(&aggs);
        assert_eq!((stats.count, stats.entities, stats.max_members), (2, 1, 4));
    }

    #[test]
    fn stats() {
        assert_eq!(aggregate_stats(&[]).count, 0);
        let props = vec![
            prop("d", 0, 0, "a", &["a", "b"]),
            prop("d", 0, 1, "b", &["b"]),
            prop("d", 0, 2, "c", &["b"]),
        ];
        let s = aggregate_stats(&build_aggregates(&props, 100));
        assert_eq!(s.count, 2);
        assert_eq!(s.avg_members, 2.0);
        assert_eq!((s.max_members, s.min_members), (3, 1));
    }
}
