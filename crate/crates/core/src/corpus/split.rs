use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Document};
use crate::error::{Error, Result};

/// Roles frequent enough in every split that they are kept for training only.
pub const FREQUENT_ROLES: [&str; 6] = [
    "Date",
    "Causes",
    "Areas affected",
    "Location",
    "Casualties",
    "Losses",
];

/// Natural-disaster event types held out as the target domain of the
/// cross-domain setting.
pub const CROSS_DOMAIN_TARGETS: [&str; 10] = [
    "Floods",
    "Droughts",
    "Earthquakes",
    "Insect Disaster",
    "Famine",
    "Tsunamis",
    "Mudslides",
    "Hurricanes",
    "Fire",
    "Volcano Eruption",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    InDomainSmall,
    InDomainBase,
    CrossDomain,
    Custom,
}

impl SplitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitKind::InDomainSmall => "in_domain_small",
            SplitKind::InDomainBase => "in_domain_base",
            SplitKind::CrossDomain => "cross_domain",
            SplitKind::Custom => "custom",
        }
    }

    /// `(train, dev, test)` event-type counts for a 59-type inventory.
    fn reference_counts(self) -> (usize, usize, usize) {
        match self {
            SplitKind::InDomainSmall => (30, 14, 15),
            // the ten held-out types are divided between dev and test
            SplitKind::InDomainBase | SplitKind::CrossDomain | SplitKind::Custom => (49, 5, 5),
        }
    }
}

impl std::str::FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in_domain_small" => Ok(SplitKind::InDomainSmall),
            "in_domain_base" => Ok(SplitKind::InDomainBase),
            "cross_domain" => Ok(SplitKind::CrossDomain),
            "custom" => Ok(SplitKind::Custom),
            other => Err(Error::Config(format!("unknown split name {other:?}"))),
        }
    }
}

/// Assignment of event types to train/dev/test plus the train-only roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub name: SplitKind,
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
    #[serde(default)]
    pub frequent_roles: Vec<String>,
}

impl SplitSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: SplitSpec = serde_json::from_str(&text)?;
        spec.check_disjoint()?;
        Ok(spec)
    }

    pub fn default_frequent_roles() -> Vec<String> {
        FREQUENT_ROLES.iter().map(|r| r.to_string()).collect()
    }

    /// Random preset of the given kind over `event_types`, with the reference
    /// proportions scaled to the inventory size. The cross-domain preset holds
    /// out the natural-disaster types when the inventory contains them.
    pub fn preset<R: Rng>(kind: SplitKind, event_types: &[&str], rng: &mut R) -> Result<Self> {
        let total = event_types.len();
        if total < 3 {
            return Err(Error::Config(format!(
                "a split needs at least 3 event types, corpus has {total}"
            )));
        }
        let mut types: Vec<String> = event_types.iter().map(|s| s.to_string()).collect();
        types.sort();
        types.dedup();

        let (dev, test, train) = if kind == SplitKind::CrossDomain
            && CROSS_DOMAIN_TARGETS
                .iter()
                .all(|t| types.iter().any(|x| x == t))
        {
            let mut targets: Vec<String> =
                CROSS_DOMAIN_TARGETS.iter().map(|s| s.to_string()).collect();
            targets.shuffle(rng);
            let test = targets.split_off(targets.len() / 2);
            let train = types
                .into_iter()
                .filter(|t| !CROSS_DOMAIN_TARGETS.contains(&t.as_str()))
                .collect();
            (targets, test, train)
        } else {
            let (r_train, r_dev, r_test) = kind.reference_counts();
            let r_total = (r_train + r_dev + r_test) as f64;
            let scale = |n: usize| ((n as f64 * total as f64 / r_total).round() as usize).max(1);
            let n_dev = scale(r_dev);
            let n_test = scale(r_test).min(total - n_dev - 1);
            types.shuffle(rng);
            let dev = types[..n_dev].to_vec();
            let test = types[n_dev..n_dev + n_test].to_vec();
            let train = types[n_dev + n_test..].to_vec();
            (dev, test, train)
        };
        Ok(SplitSpec {
            name: kind,
            train,
            dev,
            test,
            frequent_roles: Self::default_frequent_roles(),
        })
    }

    fn check_disjoint(&self) -> Result<()> {
        let lists: [(&'static str, &Vec<String>); 3] = [
            ("train", &self.train),
            ("dev", &self.dev),
            ("test", &self.test),
        ];
        for (i, (first, a)) in lists.iter().enumerate() {
            for (second, b) in &lists[i + 1..] {
                if let Some(shared) = a.iter().find(|t| b.contains(t)) {
                    return Err(Error::OverlappingSplit {
                        event_type: shared.clone(),
                        first,
                        second,
                    });
                }
            }
        }
        Ok(())
    }
}

/// A corpus partitioned into train/dev/test pools by event type.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitCorpus {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Corpus,
    /// Documents whose event type is in none of the three lists.
    pub unassigned: usize,
}

impl SplitCorpus {
    pub fn pools(&self) -> [(&'static str, &Corpus); 3] {
        [
            ("train", &self.train),
            ("dev", &self.dev),
            ("test", &self.test),
        ]
    }
}

pub fn compute_split(corpus: &Corpus, spec: &SplitSpec) -> Result<SplitCorpus> {
    spec.check_disjoint()?;
    let present = corpus.event_types();
    for t in spec.train.iter().chain(&spec.dev).chain(&spec.test) {
        if !present.contains(t.as_str()) {
            return Err(Error::UnknownEventType(t.clone()));
        }
    }
    let pick = |list: &[String]| -> Vec<Document> {
        corpus
            .iter()
            .filter(|d| list.contains(&d.event_type))
            .cloned()
            .collect()
    };
    let train = pick(&spec.train);
    let dev = pick(&spec.dev);
    let test = pick(&spec.test);
    let unassigned = corpus.len() - train.len() - dev.len() - test.len();
    Ok(SplitCorpus {
        train: Corpus::from_valid(train),
        dev: Corpus::from_valid(dev),
        test: Corpus::from_valid(test),
        unassigned,
    })
}

/// Spans removed by leakage masking, per role.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MaskingReport {
    pub removed: BTreeMap<String, usize>,
}

impl MaskingReport {
    pub fn total(&self) -> usize {
        self.removed.values().sum()
    }
}

/// Relabels as `O` every dev/test span whose role also occurs in train, and
/// every dev/test span of a frequent role. Train labels, tokens and document
/// membership are untouched.
pub fn apply_leakage_mask(split: &SplitCorpus, spec: &SplitSpec) -> (SplitCorpus, MaskingReport) {
    let train_roles: BTreeSet<&str> = split.train.arg_types();
    let frequent: BTreeSet<&str> = spec.frequent_roles.iter().map(String::as_str).collect();
    let mut report = MaskingReport::default();

    let mut mask_pool = |pool: &Corpus| -> Corpus {
        let docs = pool
            .iter()
            .map(|doc| {
                let mut kept = Vec::with_capacity(doc.arguments.len());
                for arg in &doc.arguments {
                    let role = arg.role.as_str();
                    if train_roles.contains(role) || frequent.contains(role) {
                        *report.removed.entry(arg.role.clone()).or_insert(0) += 1;
                    } else {
                        kept.push(arg.clone());
                    }
                }
                Document {
                    arguments: kept,
                    ..doc.clone()
                }
            })
            .collect();
        Corpus::from_valid(docs)
    };
    let dev = mask_pool(&split.dev);
    let test = mask_pool(&split.test);
    (
        SplitCorpus {
            train: split.train.clone(),
            dev,
            test,
            unassigned: split.unassigned,
        },
        report,
    )
}
