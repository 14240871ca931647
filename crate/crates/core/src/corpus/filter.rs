use std::collections::BTreeMap;

use super::{Corpus, Document, SplitCorpus};

/// Removes event types and argument types with fewer than `min_count`
/// annotated examples in `corpus`, iterating to a fixed point.
///
/// Event types count documents; argument types count spans. Spans of rare
/// roles are dropped, and a document that loses all of its spans leaves the
/// pool (documents that never had spans stay).
pub fn filter_rare_types(corpus: &Corpus, min_count: usize) -> Corpus {
    let min_count = min_count.max(1);
    let mut docs: Vec<(bool, Document)> = corpus
        .iter()
        .map(|d| (!d.arguments.is_empty(), d.clone()))
        .collect();

    loop {
        let mut event_counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut role_counts: BTreeMap<&str, usize> = BTreeMap::new();
        for (_, doc) in &docs {
            *event_counts.entry(doc.event_type.as_str()).or_insert(0) += 1;
            for arg in &doc.arguments {
                *role_counts.entry(arg.role.as_str()).or_insert(0) += 1;
            }
        }
        let rare_event: Vec<bool> = docs
            .iter()
            .map(|(_, d)| event_counts[d.event_type.as_str()] < min_count)
            .collect();
        let rare_role = |role: &str| role_counts[role] < min_count;
        let any_rare_role = role_counts.values().any(|&c| c < min_count);
        if !any_rare_role && !rare_event.iter().any(|&r| r) {
            break;
        }

        let next: Vec<(bool, Document)> = docs
            .iter()
            .zip(&rare_event)
            .filter(|(_, &rare)| !rare)
            .map(|((had_args, doc), _)| (*had_args, doc.retain_roles(|r| !rare_role(r))))
            .filter(|(had_args, doc)| !(*had_args && doc.arguments.is_empty()))
            .collect();
        docs = next;
    }
    Corpus::from_valid(docs.into_iter().map(|(_, d)| d).collect())
}

/// Applies [`filter_rare_types`] to each pool independently.
pub fn filter_split(split: &SplitCorpus, min_count: usize) -> SplitCorpus {
    SplitCorpus {
        train: filter_rare_types(&split.train, min_count),
        dev: filter_rare_types(&split.dev, min_count),
        test: filter_rare_types(&split.test, min_count),
        unassigned: split.unassigned,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ArgumentSpan;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn doc(id: usize, event: &str, roles: &[&str]) -> Document {
        Document {
            doc_id: format!("d{id}"),
            title: String::new(),
            event_type: event.into(),
            tokens: (0..roles.len().max(1)).map(|i| format!("w{i}")).collect(),
            arguments: roles
                .iter()
                .enumerate()
                .map(|(i, r)| ArgumentSpan::new(i, i + 1, *r))
                .collect(),
        }
    }

    /// Independent recount: repeatedly scan for any violating type and
    /// remove it, one type at a time, until none remain.
    fn brute_force(docs: &[Document], min_count: usize) -> Vec<Document> {
        let mut current: Vec<(bool, Document)> = docs
            .iter()
            .map(|d| (!d.arguments.is_empty(), d.clone()))
            .collect();
        loop {
            let mut events: HashMap<String, usize> = HashMap::new();
            let mut roles: HashMap<String, usize> = HashMap::new();
            for (_, d) in &current {
                *events.entry(d.event_type.clone()).or_default() += 1;
                for a in &d.arguments {
                    *roles.entry(a.role.clone()).or_default() += 1;
                }
            }
            if let Some((role, _)) = roles.iter().find(|(_, &c)| c < min_count) {
                let role = role.clone();
                for (_, d) in current.iter_mut() {
                    d.arguments.retain(|a| a.role != role);
                }
                current.retain(|(had, d)| !(*had && d.arguments.is_empty()));
                continue;
            }
            if let Some((event, _)) = events.iter().find(|(_, &c)| c < min_count) {
                let event = event.clone();
                current.retain(|(_, d)| d.event_type != event);
                continue;
            }
            return current.into_iter().map(|(_, d)| d).collect();
        }
    }

    #[test]
    fn singleton_role_is_removed() {
        let corpus = Corpus::new(vec![
            doc(0, "E", &["A", "B"]),
            doc(1, "E", &["A"]),
            doc(2, "E", &["A"]),
        ])
        .unwrap();
        let out = filter_rare_types(&corpus, 2);
        assert!(!out.arg_types().contains("B"));
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn min_count_one_is_identity() {
        let corpus = Corpus::new(vec![doc(0, "E", &["A", "B"]), doc(1, "F", &[])]).unwrap();
        assert_eq!(filter_rare_types(&corpus, 1), corpus);
    }

    #[test]
    fn doc_losing_all_spans_is_dropped_and_cascades() {
        // d2 only has rare role C; once it leaves, event G has one document.
        let corpus = Corpus::new(vec![
            doc(0, "E", &["A"]),
            doc(1, "E", &["A"]),
            doc(2, "G", &["C"]),
            doc(3, "G", &["A"]),
        ])
        .unwrap();
        let out = filter_rare_types(&corpus, 2);
        let ids: Vec<&str> = out.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(ids, ["d0", "d1"]);
    }

    #[test]
    fn ten_doc_fixture_matches_brute_force() {
        let docs = vec![
            doc(0, "Fire", &["Cause", "Area"]),
            doc(1, "Fire", &["Cause"]),
            doc(2, "Fire", &["Victim", "Area"]),
            doc(3, "Flood", &["River"]),
            doc(4, "Flood", &["River", "Rain"]),
            doc(5, "Flood", &["Rain", "Dam"]),
            doc(6, "Quake", &["Magnitude"]),
            doc(7, "Quake", &["Depth"]),
            doc(8, "Riot", &["Crowd", "Crowd"]),
            doc(9, "Famine", &["Crop", "Crop", "Area"]),
        ];
        let corpus = Corpus::new(docs.clone()).unwrap();
        for min_count in 1..=3 {
            assert_eq!(
                filter_rare_types(&corpus, min_count).into_docs(),
                brute_force(&docs, min_count),
                "min_count {min_count}"
            );
        }
    }

    fn arb_docs() -> impl Strategy<Value = Vec<Document>> {
        let roles = ["A", "B", "C", "D", "E", "F"];
        let events = ["X", "Y", "Z"];
        prop::collection::vec(
            (0..events.len(), prop::collection::vec(0..roles.len(), 0..4)),
            0..25,
        )
        .prop_map(move |raw| {
            raw.into_iter()
                .enumerate()
                .map(|(i, (e, rs))| {
                    let names: Vec<&str> = rs.iter().map(|&r| roles[r]).collect();
                    doc(i, events[e], &names)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn idempotent_and_matches_oracle(docs in arb_docs(), min_count in 1usize..4) {
            let corpus = Corpus::new(docs.clone()).unwrap();
            let once = filter_rare_types(&corpus, min_count);
            let twice = filter_rare_types(&once, min_count);
            prop_assert_eq!(&once, &twice);
            for count in once.role_counts().values() {
                prop_assert!(*count >= min_count);
            }
            // the oracle removes types one at a time; the fixed point is the same
            let mut expected = brute_force(&docs, min_count);
            let mut got = once.into_docs();
            expected.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
            got.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
            prop_assert_eq!(got, expected);
        }
    }
}
