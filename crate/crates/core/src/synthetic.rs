//! Seeded synthetic corpora: random corpora for property checks, a corpus
//! whose argument density follows published DocEE summary statistics, and a
//! separable corpus on which roles are fully determined by marker tokens.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    ArgumentSpan, Corpus, Document, SplitKind, SplitSpec, CROSS_DOMAIN_TARGETS, FREQUENT_ROLES,
};
use crate::rng;

const SYNTH: &str = "synthetic";

/// Places spans of the given lengths at random non-overlapping positions,
/// returning them sorted by start. Lengths that no longer fit are dropped.
fn place_spans<R: Rng>(rng: &mut R, len: usize, widths: &[(usize, String)]) -> Vec<ArgumentSpan> {
    let mut taken = vec![false; len];
    let mut spans = Vec::new();
    for (width, role) in widths {
        for _ in 0..20 {
            if *width > len {
                break;
            }
            let start = rng.gen_range(0..=len - width);
            if taken[start..start + width].iter().any(|t| *t) {
                continue;
            }
            taken[start..start + width]
                .iter_mut()
                .for_each(|t| *t = true);
            spans.push(ArgumentSpan::new(start, start + width, role.clone()));
            break;
        }
    }
    spans.sort();
    spans
}

fn filler_tokens<R: Rng>(rng: &mut R, len: usize, vocab: usize) -> Vec<String> {
    (0..len)
        .map(|_| format!("w{}", rng.gen_range(0..vocab)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomCorpusConfig {
    pub num_docs: usize,
    pub num_event_types: usize,
    /// Size of the shared pool of role names (besides the frequent roles).
    pub role_pool: usize,
    pub roles_per_event: (usize, usize),
    pub doc_len: (usize, usize),
    pub args_per_doc: (usize, usize),
    /// Chance that an event schema includes each frequent role.
    pub frequent_role_prob: f64,
    /// Name the first event types after the natural-disaster targets.
    pub target_event_names: bool,
}

impl Default for RandomCorpusConfig {
    fn default() -> Self {
        Self {
            num_docs: 500,
            num_event_types: 20,
            role_pool: 40,
            roles_per_event: (4, 9),
            doc_len: (40, 120),
            args_per_doc: (1, 10),
            frequent_role_prob: 0.3,
            target_event_names: false,
        }
    }
}

/// Random corpus whose event schemas draw roles from a shared pool, so that
/// roles recur across event types.
pub fn random_corpus(cfg: &RandomCorpusConfig, seed: u64) -> Corpus {
    let mut rng = rng::substream(seed, SYNTH, 0);
    let names: Vec<String> = (0..cfg.num_event_types)
        .map(|e| match CROSS_DOMAIN_TARGETS.get(e) {
            Some(t) if cfg.target_event_names => t.to_string(),
            _ => format!("event_{e:02}"),
        })
        .collect();
    let schemas: Vec<Vec<String>> = (0..cfg.num_event_types)
        .map(|_| {
            let k = rng.gen_range(cfg.roles_per_event.0..=cfg.roles_per_event.1);
            let mut roles: Vec<String> = (0..cfg.role_pool)
                .collect::<Vec<_>>()
                .choose_multiple(&mut rng, k.min(cfg.role_pool))
                .map(|i| format!("role_{i}"))
                .collect();
            for f in FREQUENT_ROLES {
                if rng.gen_bool(cfg.frequent_role_prob) {
                    roles.push(f.to_string());
                }
            }
            roles
        })
        .collect();
    let docs = (0..cfg.num_docs)
        .map(|i| {
            let e = rng.gen_range(0..cfg.num_event_types);
            let len = rng.gen_range(cfg.doc_len.0..=cfg.doc_len.1);
            let n_args = rng.gen_range(cfg.args_per_doc.0..=cfg.args_per_doc.1);
            let widths: Vec<(usize, String)> = (0..n_args)
                .map(|_| {
                    (
                        rng.gen_range(1..=4),
                        schemas[e].choose(&mut rng).cloned().unwrap_or_default(),
                    )
                })
                .filter(|(_, r)| !r.is_empty())
                .collect();
            Document {
                doc_id: format!("doc{i:05}"),
                title: String::new(),
                event_type: names[e].clone(),
                tokens: filler_tokens(&mut rng, len, 500),
                arguments: place_spans(&mut rng, len, &widths),
            }
        })
        .collect();
    Corpus::new(docs).expect("generated documents are valid")
}

/// Inclusion probability of each of an event's six roles in a document;
/// decreasing, so a few roles dominate (expected 3.4 distinct roles).
pub const ROLE_INCLUSION: [f64; 6] = [0.9, 0.8, 0.6, 0.5, 0.35, 0.25];

/// Chance that a present role occurs once more (geometric repeats, 1.5
/// mentions per present role on average).
pub const ROLE_REPEAT: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedCorpusConfig {
    pub num_docs: usize,
    pub doc_len: (usize, usize),
}

impl Default for CalibratedCorpusConfig {
    fn default() -> Self {
        Self {
            num_docs: 21_450,
            doc_len: (300, 1056),
        }
    }
}

/// Names of the 59 event types: the ten natural-disaster types plus 49
/// generic ones.
pub fn calibrated_event_types() -> Vec<String> {
    CROSS_DOMAIN_TARGETS
        .iter()
        .map(|s| s.to_string())
        .chain((0..49).map(|i| format!("Event {i:02}")))
        .collect()
}

/// Corpus calibrated to DocEE summary figures: 59 event types with six roles
/// each, about 5.1 arguments per document and 678 tokens per document on
/// average (with the default length range).
pub fn calibrated_corpus(cfg: &CalibratedCorpusConfig, seed: u64) -> Corpus {
    let mut rng = rng::substream(seed, SYNTH, 1);
    let events = calibrated_event_types();
    let schemas: Vec<Vec<String>> = events
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut roles = vec![FREQUENT_ROLES[i % FREQUENT_ROLES.len()].to_string()];
            roles.extend((1..6).map(|j| format!("{e} role {j}")));
            roles
        })
        .collect();
    let docs = (0..cfg.num_docs)
        .map(|i| {
            let e = rng.gen_range(0..events.len());
            let len = rng.gen_range(cfg.doc_len.0..=cfg.doc_len.1);
            let widths = loop {
                let mut widths = Vec::new();
                for (role, p) in schemas[e].iter().zip(ROLE_INCLUSION) {
                    if rng.gen_bool(p) {
                        widths.push((rng.gen_range(1..=4), role.clone()));
                        while rng.gen_bool(ROLE_REPEAT) {
                            widths.push((rng.gen_range(1..=4), role.clone()));
                        }
                    }
                }
                if !widths.is_empty() {
                    break widths;
                }
            };
            Document {
                doc_id: format!("doc{i:05}"),
                title: String::new(),
                event_type: events[e].clone(),
                tokens: filler_tokens(&mut rng, len, 5000),
                arguments: place_spans(&mut rng, len, &widths),
            }
        })
        .collect();
    Corpus::new(docs).expect("generated documents are valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableConfig {
    pub train_events: usize,
    pub dev_events: usize,
    pub test_events: usize,
    pub roles_per_event: usize,
    pub docs_per_event: usize,
    pub doc_len: usize,
    pub fillers: usize,
    pub values: usize,
    pub markers: usize,
}

impl Default for SeparableConfig {
    fn default() -> Self {
        Self {
            train_events: 8,
            dev_events: 2,
            test_events: 2,
            roles_per_event: 3,
            docs_per_event: 40,
            doc_len: 40,
            fillers: 50,
            values: 30,
            markers: 12,
        }
    }
}

/// Corpus in which every argument is two value tokens wrapped in its role's
/// marker token (`m v v m`) amid filler tokens. Fillers, values and markers
/// come from small shared vocabularies; every role of an event occurs in each
/// of its documents, and roles of different events never share a name. Roles
/// of dev events, and separately of test events, get distinct markers.
pub fn separable_corpus(cfg: &SeparableConfig, seed: u64) -> (Corpus, SplitSpec) {
    let mut rng = rng::substream(seed, SYNTH, 2);
    let groups = [
        ("train", cfg.train_events),
        ("dev", cfg.dev_events),
        ("test", cfg.test_events),
    ];
    let mut names: [Vec<String>; 3] = Default::default();
    let mut docs = Vec::new();
    for (g, (prefix, count)) in groups.iter().enumerate() {
        for e in 0..*count {
            let event = format!("{prefix}_event_{e}");
            names[g].push(event.clone());
            // markers: consecutive within the group so dev/test roles differ
            let markers: Vec<String> = (0..cfg.roles_per_event)
                .map(|r| format!("m{}", (e * cfg.roles_per_event + r) % cfg.markers))
                .collect();
            for d in 0..cfg.docs_per_event {
                let mut order: Vec<usize> = (0..cfg.roles_per_event).collect();
                order.shuffle(&mut rng);
                let mut tokens = Vec::with_capacity(cfg.doc_len);
                let mut arguments = Vec::new();
                let slots = cfg.roles_per_event + 1;
                let budget = cfg.doc_len.saturating_sub(4 * cfg.roles_per_event);
                let mut gaps: Vec<usize> = (0..slots).map(|_| 1).collect();
                for _ in 0..budget.saturating_sub(slots) {
                    gaps[rng.gen_range(0..slots)] += 1;
                }
                let filler = |rng: &mut ChaCha8Rng| format!("f{}", rng.gen_range(0..cfg.fillers));
                for (slot, &r) in order.iter().enumerate() {
                    for _ in 0..gaps[slot] {
                        tokens.push(filler(&mut rng));
                    }
                    tokens.push(markers[r].clone());
                    let start = tokens.len();
                    for _ in 0..2 {
                        tokens.push(format!("v{}", rng.gen_range(0..cfg.values)));
                    }
                    arguments.push(ArgumentSpan::new(
                        start,
                        start + 2,
                        format!("{event}:role{r}"),
                    ));
                    tokens.push(markers[r].clone());
                }
                for _ in 0..gaps[slots - 1] {
                    tokens.push(filler(&mut rng));
                }
                docs.push(Document {
                    doc_id: format!("{event}_doc{d:03}"),
                    title: String::new(),
                    event_type: event.clone(),
                    tokens,
                    arguments,
                });
            }
        }
    }
    let [train, dev, test] = names;
    let spec = SplitSpec {
        name: SplitKind::Custom,
        train,
        dev,
        test,
        frequent_roles: Vec::new(),
    };
    (
        Corpus::new(docs).expect("generated documents are valid"),
        spec,
    )
}
