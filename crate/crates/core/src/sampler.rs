//! N-way D-doc episode sampling.
//!
//! An episode's support set is exactly `D` documents whose annotated roles
//! together form exactly `N` distinct argument types; the per-type shot count
//! is whatever those documents happen to contain. Candidates are grown one
//! random document at a time: a draw that would push the distinct-role count
//! past `N` or the document count past `D` is discarded, and after `10 * D`
//! consecutive discards the partial candidate is thrown away and sampling
//! restarts from scratch.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_MAX_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_ways: usize,
    pub d_docs: usize,
    #[serde(default = "default_query_size")]
    pub query_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
}

fn default_query_size() -> usize {
    1
}

fn default_max_attempts() -> usize {
    DEFAULT_MAX_ATTEMPTS
}

impl SamplerConfig {
    pub fn new(n_ways: usize, d_docs: usize, seed: u64) -> Self {
        Self {
            n_ways,
            d_docs,
            query_size: 1,
            seed,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ways == 0 || self.d_docs == 0 || self.query_size == 0 || self.max_attempts == 0 {
            return Err(Error::Config(format!(
                "sampler needs n_ways, d_docs, query_size and max_attempts >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Short setting name such as `3w2d`.
    pub fn setting(&self) -> String {
        format!("{}w{}d", self.n_ways, self.d_docs)
    }
}

/// One few-shot task: labeled support documents and query documents whose
/// arguments of the active types are to be extracted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: u64,
    pub active_types: Vec<String>,
    pub support: Vec<Document>,
    pub query: Vec<Document>,
}

impl Episode {
    pub fn n_ways(&self) -> usize {
        self.active_types.len()
    }

    pub fn type_index(&self, role: &str) -> Option<usize> {
        self.active_types.iter().position(|t| t == role)
    }

    /// Roles carrying labels anywhere in the episode.
    pub fn labeled_roles(&self) -> BTreeSet<&str> {
        self.support
            .iter()
            .chain(&self.query)
            .flat_map(|d| d.arguments.iter().map(|a| a.role.as_str()))
            .collect()
    }

    /// Total retained argument spans in the support set.
    pub fn support_args(&self) -> usize {
        self.support.iter().map(|d| d.arguments.len()).sum()
    }

    /// Checks the structural invariants of a sampled episode.
    pub fn check(&self, cfg: &SamplerConfig) -> std::result::Result<(), String> {
        if self.support.len() != cfg.d_docs {
            return Err(format!(
                "episode {}: {} support documents, expected {}",
                self.episode_id,
                self.support.len(),
                cfg.d_docs
            ));
        }
        let retained: BTreeSet<&str> = self
            .support
            .iter()
            .flat_map(|d| d.arguments.iter().map(|a| a.role.as_str()))
            .collect();
        let active: BTreeSet<&str> = self.active_types.iter().map(String::as_str).collect();
        if active.len() != cfg.n_ways || self.active_types.len() != cfg.n_ways {
            return Err(format!(
                "episode {}: {} active types, expected {}",
                self.episode_id,
                self.active_types.len(),
                cfg.n_ways
            ));
        }
        if retained != active {
            return Err(format!(
                "episode {}: retained support roles {retained:?} differ from active types {active:?}",
                self.episode_id
            ));
        }
        let support_ids: BTreeSet<&str> = self.support.iter().map(|d| d.doc_id.as_str()).collect();
        if support_ids.len() != self.support.len() {
            return Err(format!(
                "episode {}: repeated support document",
                self.episode_id
            ));
        }
        if self.query.len() != cfg.query_size {
            return Err(format!(
                "episode {}: {} query documents, expected {}",
                self.episode_id,
                self.query.len(),
                cfg.query_size
            ));
        }
        for q in &self.query {
            if support_ids.contains(q.doc_id.as_str()) {
                return Err(format!(
                    "episode {}: query document {} is also in the support set",
                    self.episode_id, q.doc_id
                ));
            }
            if q.arguments.is_empty() {
                return Err(format!(
                    "episode {}: query document {} has no active-type span",
                    self.episode_id, q.doc_id
                ));
            }
            if q.arguments
                .iter()
                .any(|a| !active.contains(a.role.as_str()))
            {
                return Err(format!(
                    "episode {}: query document {} keeps an inactive role",
                    self.episode_id, q.doc_id
                ));
            }
        }
        Ok(())
    }
}

/// Episodes in generation order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EpisodeSet {
    pub episodes: Vec<Episode>,
}

impl EpisodeSet {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Episode> {
        self.episodes.iter()
    }

    pub fn labeled_roles(&self) -> BTreeSet<&str> {
        self.episodes
            .iter()
            .flat_map(Episode::labeled_roles)
            .collect()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for ep in &self.episodes {
            out.push_str(&serde_json::to_string(ep)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for ep in &self.episodes {
            serde_json::to_writer(&mut out, ep)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut episodes = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let ep: Episode = serde_json::from_str(line).map_err(|e| Error::MalformedRecord {
                line: idx + 1,
                message: e.to_string(),
            })?;
            for doc in ep.support.iter().chain(&ep.query) {
                doc.validate()?;
            }
            episodes.push(ep);
        }
        Ok(Self { episodes })
    }
}

/// Interned view of a pool: only documents with at least one span take part.
#[derive(Debug)]
pub struct PoolIndex<'a> {
    docs: Vec<&'a Document>,
    /// Sorted, deduplicated role ids per document.
    roles: Vec<Vec<u32>>,
    role_names: Vec<&'a str>,
    /// Documents containing each role.
    by_role: Vec<Vec<usize>>,
    /// (event type, role combination) -> documents.
    strata: BTreeMap<(&'a str, Vec<u32>), Vec<usize>>,
}

impl<'a> PoolIndex<'a> {
    pub fn new(pool: &'a Corpus) -> Self {
        let mut ids: BTreeMap<&str, u32> = BTreeMap::new();
        for doc in pool.iter() {
            for a in &doc.arguments {
                let next = ids.len() as u32;
                ids.entry(a.role.as_str()).or_insert(next);
            }
        }
        let mut role_names = vec![""; ids.len()];
        for (name, &id) in &ids {
            role_names[id as usize] = name;
        }
        let mut docs = Vec::new();
        let mut roles = Vec::new();
        let mut by_role = vec![Vec::new(); ids.len()];
        let mut strata: BTreeMap<(&str, Vec<u32>), Vec<usize>> = BTreeMap::new();
        for doc in pool.iter().filter(|d| !d.arguments.is_empty()) {
            let set: BTreeSet<u32> = doc.arguments.iter().map(|a| ids[a.role.as_str()]).collect();
            let set: Vec<u32> = set.into_iter().collect();
            let idx = docs.len();
            for &r in &set {
                by_role[r as usize].push(idx);
            }
            strata
                .entry((doc.event_type.as_str(), set.clone()))
                .or_default()
                .push(idx);
            docs.push(doc);
            roles.push(set);
        }
        Self {
            docs,
            roles,
            role_names,
            by_role,
            strata,
        }
    }

    pub fn num_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn num_roles(&self) -> usize {
        self.role_names.len()
    }
}

/// Restricts the first support draw of an episode to a set of documents.
#[derive(Debug, Clone, Copy)]
pub struct Stratum<'s> {
    pub docs: &'s [usize],
}

/// Samples one episode following the N-way D-doc rejection loop.
pub fn sample_episode<R: Rng>(
    pool: &PoolIndex<'_>,
    cfg: &SamplerConfig,
    rng: &mut R,
    episode_id: u64,
    stratum: Option<Stratum<'_>>,
) -> Result<Episode> {
    cfg.validate()?;
    let (n, d) = (cfg.n_ways, cfg.d_docs);
    if pool.num_docs() == 0 {
        return Err(Error::Infeasible("pool has no annotated documents".into()));
    }
    if pool.num_roles() < n {
        return Err(Error::Infeasible(format!(
            "pool has {} argument types, fewer than N = {n}",
            pool.num_roles()
        )));
    }
    if pool.num_docs() < d + cfg.query_size {
        return Err(Error::Infeasible(format!(
            "pool has {} annotated documents, fewer than D + query_size = {}",
            pool.num_docs(),
            d + cfg.query_size
        )));
    }

    let reset_after = 10 * d;
    let mut support: Vec<usize> = Vec::with_capacity(d);
    let mut roles: BTreeSet<u32> = BTreeSet::new();
    let mut rejected = 0usize;
    let mut supports_found = 0usize;
    let mut attempts = 0usize;

    loop {
        if support.len() == d && roles.len() == n {
            supports_found += 1;
            if let Some(query) = pick_query(pool, &support, &roles, cfg.query_size, rng) {
                return Ok(build_episode(pool, episode_id, &support, &roles, &query));
            }
            support.clear();
            roles.clear();
            rejected = 0;
        }
        attempts += 1;
        if attempts > cfg.max_attempts {
            let why = if supports_found == 0 {
                format!(
                    "no {d} documents carrying exactly N = {n} distinct argument types found after {} draws",
                    cfg.max_attempts
                )
            } else {
                format!(
                    "no {} query document(s) outside the support set with an active-type span \
                     ({supports_found} valid support sets tried in {} draws)",
                    cfg.query_size, cfg.max_attempts
                )
            };
            return Err(Error::Infeasible(why));
        }

        let candidate = match (support.is_empty(), stratum) {
            (true, Some(s)) if !s.docs.is_empty() => s.docs[rng.gen_range(0..s.docs.len())],
            _ => rng.gen_range(0..pool.num_docs()),
        };
        let count_n = pool.roles[candidate]
            .iter()
            .filter(|r| !roles.contains(r))
            .count()
            + roles.len();
        if support.contains(&candidate) || count_n > n || support.len() + 1 > d {
            rejected += 1;
            if rejected >= reset_after {
                support.clear();
                roles.clear();
                rejected = 0;
            }
            continue;
        }
        support.push(candidate);
        roles.extend(pool.roles[candidate].iter().copied());
        rejected = 0;
    }
}

fn pick_query<R: Rng>(
    pool: &PoolIndex<'_>,
    support: &[usize],
    roles: &BTreeSet<u32>,
    query_size: usize,
    rng: &mut R,
) -> Option<Vec<usize>> {
    let eligible: BTreeSet<usize> = roles
        .iter()
        .flat_map(|&r| pool.by_role[r as usize].iter().copied())
        .filter(|i| !support.contains(i))
        .collect();
    if eligible.len() < query_size {
        return None;
    }
    let eligible: Vec<usize> = eligible.into_iter().collect();
    Some(
        sample_indices(rng, eligible.len(), query_size)
            .into_iter()
            .map(|i| eligible[i])
            .collect(),
    )
}

fn build_episode(
    pool: &PoolIndex<'_>,
    episode_id: u64,
    support: &[usize],
    roles: &BTreeSet<u32>,
    query: &[usize],
) -> Episode {
    let mut active_types: Vec<String> = roles
        .iter()
        .map(|&r| pool.role_names[r as usize].to_string())
        .collect();
    active_types.sort();
    let keep = |role: &str| active_types.iter().any(|t| t == role);
    Episode {
        episode_id,
        support: support
            .iter()
            .map(|&i| pool.docs[i].retain_roles(keep))
            .collect(),
        query: query
            .iter()
            .map(|&i| pool.docs[i].retain_roles(keep))
            .collect(),
        active_types: active_types.clone(),
    }
}

/// Non-fatal conditions met while generating an episode set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingWarning {
    pub stratum: String,
    pub message: String,
}

/// Generates `count` episodes. Episode `i` draws from its own random stream
/// derived from `(cfg.seed, i)`, so the result does not depend on the number
/// of worker threads.
///
/// With `balance` on, the first support document of episode `i` comes from
/// the `i`-th stratum in a rotation over event types, and within an event
/// type over its argument-type combinations; the remaining draws are uniform.
/// Strata that cannot seed an episode are skipped with a warning.
pub fn generate_episode_set(
    pool: &Corpus,
    cfg: &SamplerConfig,
    count: usize,
    balance: bool,
) -> Result<(EpisodeSet, Vec<SamplingWarning>)> {
    cfg.validate()?;
    if count == 0 {
        return Err(Error::Config("episode count must be at least 1".into()));
    }
    let index = PoolIndex::new(pool);
    let mut warnings = Vec::new();

    // rotation: event types in order, each cycling over its reachable combinations
    let mut rotation: Vec<Vec<&[usize]>> = Vec::new();
    if balance {
        let mut current: Option<&str> = None;
        for ((event, combo), docs) in &index.strata {
            let reachable =
                combo.len() <= cfg.n_ways && (cfg.d_docs > 1 || combo.len() == cfg.n_ways);
            if !reachable {
                warnings.push(SamplingWarning {
                    stratum: format!("{event}/{}", stratum_roles(&index, combo)),
                    message: format!(
                        "{} roles cannot seed a {} episode",
                        combo.len(),
                        cfg.setting()
                    ),
                });
                continue;
            }
            if current != Some(event) {
                rotation.push(Vec::new());
                current = Some(event);
            }
            rotation
                .last_mut()
                .expect("pushed above")
                .push(docs.as_slice());
        }
        if rotation.is_empty() {
            warnings.push(SamplingWarning {
                stratum: "*".into(),
                message: "no reachable stratum; falling back to uniform sampling".into(),
            });
        }
    }

    let results: Vec<(Result<Episode>, Option<SamplingWarning>)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::substream(cfg.seed, rng::SAMPLER, i as u64);
            let stratum = (!rotation.is_empty()).then(|| {
                let events = &rotation[i % rotation.len()];
                Stratum {
                    docs: events[(i / rotation.len()) % events.len()],
                }
            });
            match sample_episode(&index, cfg, &mut rng, i as u64, stratum) {
                Err(Error::Infeasible(msg)) if stratum.is_some() => {
                    let warning = SamplingWarning {
                        stratum: format!("episode {i}"),
                        message: format!("stratum unreachable ({msg}); sampled uniformly"),
                    };
                    let mut rng = rng::substream(cfg.seed, rng::SAMPLER, i as u64);
                    (
                        sample_episode(&index, cfg, &mut rng, i as u64, None),
                        Some(warning),
                    )
                }
                other => (other, None),
            }
        })
        .collect();

    let mut episodes = Vec::with_capacity(count);
    for (result, warning) in results {
        episodes.push(result?);
        warnings.extend(warning);
    }
    for w in &warnings {
        log::warn!("{}: {}", w.stratum, w.message);
    }
    Ok((EpisodeSet { episodes }, warnings))
}

fn stratum_roles(index: &PoolIndex<'_>, combo: &[u32]) -> String {
    combo
        .iter()
        .map(|&r| index.role_names[r as usize])
        .collect::<Vec<_>>()
        .join("+")
}

/// Argument-density statistics of an episode set, counted over support sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub episodes: usize,
    /// Mean retained support arguments per episode.
    pub micro_avg_args: f64,
    /// For each argument type, the mean support-argument count of the
    /// episodes it is active in; averaged over types.
    pub macro_avg_args: f64,
    /// Mean number of support instances per active type per episode.
    pub mean_k_shot: f64,
    /// Emergent shot count -> number of (episode, type) pairs with it.
    pub k_shot_histogram: BTreeMap<usize, usize>,
}

pub fn episode_stats(set: &EpisodeSet) -> Result<EpisodeStats> {
    if set.is_empty() {
        return Err(Error::Config(
            "episode statistics need a non-empty set".into(),
        ));
    }
    let mut total = 0usize;
    let mut per_type: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    let mut shots = 0usize;
    let mut pairs = 0usize;
    for ep in set.iter() {
        let args = ep.support_args();
        total += args;
        for t in &ep.active_types {
            let entry = per_type.entry(t.as_str()).or_insert((0, 0));
            entry.0 += args;
            entry.1 += 1;
            let k = ep
                .support
                .iter()
                .flat_map(|d| &d.arguments)
                .filter(|a| &a.role == t)
                .count();
            *histogram.entry(k).or_insert(0) += 1;
            shots += k;
            pairs += 1;
        }
    }
    let macro_avg = per_type
        .values()
        .map(|&(args, eps)| args as f64 / eps as f64)
        .sum::<f64>()
        / per_type.len().max(1) as f64;
    Ok(EpisodeStats {
        episodes: set.len(),
        micro_avg_args: total as f64 / set.len() as f64,
        macro_avg_args: macro_avg,
        mean_k_shot: if pairs == 0 {
            0.0
        } else {
            shots as f64 / pairs as f64
        },
        k_shot_histogram: histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ArgumentSpan;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn doc(id: &str, event: &str, roles: &[&str]) -> Document {
        Document {
            doc_id: id.into(),
            title: String::new(),
            event_type: event.into(),
            tokens: (0..roles.len() + 2).map(|i| format!("w{i}")).collect(),
            arguments: roles
                .iter()
                .enumerate()
                .map(|(i, r)| ArgumentSpan::new(i, i + 1, *r))
                .collect(),
        }
    }

    #[test]
    fn support_matches_pair_enumeration() {
        let pool = Corpus::new(vec![
            doc("d1", "E", &["A", "B"]),
            doc("d2", "E", &["B", "C"]),
            doc("d3", "E", &["A"]),
        ])
        .unwrap();
        // exhaustive enumeration of document pairs carrying exactly three roles
        let docs = pool.docs();
        let mut valid_pairs = BTreeSet::new();
        for i in 0..docs.len() {
            for j in i + 1..docs.len() {
                let union: BTreeSet<&str> =
                    docs[i].roles().union(&docs[j].roles()).copied().collect();
                if union.len() == 3 {
                    let mut pair = vec![docs[i].doc_id.clone(), docs[j].doc_id.clone()];
                    pair.sort();
                    valid_pairs.insert(pair);
                }
            }
        }
        assert_eq!(valid_pairs.len(), 2);

        let index = PoolIndex::new(&pool);
        let cfg = SamplerConfig::new(3, 2, 0);
        let mut seen = BTreeSet::new();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ep = sample_episode(&index, &cfg, &mut rng, 0, None).unwrap();
            ep.check(&cfg).unwrap();
            let mut support: Vec<String> = ep.support.iter().map(|d| d.doc_id.clone()).collect();
            support.sort();
            assert!(valid_pairs.contains(&support), "{support:?}");
            // the leftover document is the only possible query
            assert!(!support.contains(&ep.query[0].doc_id));
            seen.insert(support);
        }
        assert_eq!(seen, valid_pairs);
    }

    #[test]
    fn single_document_pool_is_infeasible() {
        let pool = Corpus::new(vec![doc("only", "E", &["A"])]).unwrap();
        let index = PoolIndex::new(&pool);
        let err = sample_episode(
            &index,
            &SamplerConfig::new(1, 1, 0),
            &mut ChaCha8Rng::seed_from_u64(0),
            0,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)), "{err}");
    }

    #[test]
    fn missing_query_candidate_exhausts_attempts() {
        // both docs are needed... but the only doc sharing role A is d1 itself
        let pool = Corpus::new(vec![doc("d1", "E", &["A"]), doc("d2", "E", &["B"])]).unwrap();
        let index = PoolIndex::new(&pool);
        let mut cfg = SamplerConfig::new(1, 1, 0);
        cfg.max_attempts = 500;
        let err =
            sample_episode(&index, &cfg, &mut ChaCha8Rng::seed_from_u64(4), 0, None).unwrap_err();
        assert!(err.to_string().contains("query"), "{err}");
    }

    #[test]
    fn inactive_roles_are_relabeled_in_query() {
        let pool = Corpus::new(vec![doc("s", "E", &["A"]), doc("q", "E", &["A", "Z"])]).unwrap();
        let index = PoolIndex::new(&pool);
        let cfg = SamplerConfig::new(1, 1, 0);
        for seed in 0..20 {
            let ep = sample_episode(&index, &cfg, &mut ChaCha8Rng::seed_from_u64(seed), 0, None)
                .unwrap();
            ep.check(&cfg).unwrap();
            if ep.support[0].doc_id == "s" {
                assert_eq!(ep.query[0].arguments, vec![ArgumentSpan::new(0, 1, "A")]);
                assert_eq!(ep.query[0].tokens.len(), 4);
            }
        }
    }

    #[test]
    fn balanced_rotation_covers_event_types() {
        let mut docs = Vec::new();
        for i in 0..30 {
            docs.push(doc(&format!("a{i}"), "Alpha", &["A1", "A2"]));
        }
        for i in 0..3 {
            docs.push(doc(&format!("b{i}"), "Beta", &["B1"]));
        }
        let pool = Corpus::new(docs).unwrap();
        let cfg = SamplerConfig::new(1, 1, 11);
        let (set, warnings) = generate_episode_set(&pool, &cfg, 10, true).unwrap();
        // Alpha docs carry two roles and cannot seed a 1-way episode
        assert!(!warnings.is_empty());
        let (set_n2, _) =
            generate_episode_set(&pool, &SamplerConfig::new(2, 1, 11), 10, true).unwrap();
        assert_eq!(set.len(), 10);
        assert!(set.iter().all(|e| e.support[0].event_type == "Beta"));

        let mut docs = Vec::new();
        for i in 0..30 {
            docs.push(doc(&format!("a{i}"), "Alpha", &["A1"]));
        }
        for i in 0..3 {
            docs.push(doc(&format!("b{i}"), "Beta", &["B1"]));
        }
        let pool = Corpus::new(docs).unwrap();
        let (set, warnings) = generate_episode_set(&pool, &cfg, 10, true).unwrap();
        assert!(warnings.is_empty());
        for event in ["Alpha", "Beta"] {
            let n = set
                .iter()
                .filter(|e| e.support.iter().any(|d| d.event_type == event))
                .count();
            assert!(n >= 4, "{event} appears in {n} episodes");
        }
        assert_eq!(set_n2.len(), 10);
    }

    #[test]
    fn generation_is_deterministic_and_thread_independent() {
        let mut docs = Vec::new();
        for i in 0..40 {
            let roles: Vec<&str> = ["A", "B", "C", "D"][..(i % 3) + 1].to_vec();
            docs.push(doc(
                &format!("d{i}"),
                if i % 2 == 0 { "E" } else { "F" },
                &roles,
            ));
        }
        let pool = Corpus::new(docs).unwrap();
        let cfg = SamplerConfig::new(2, 2, 99);
        let (a, _) = generate_episode_set(&pool, &cfg, 50, true).unwrap();
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let (b, _) = single.install(|| generate_episode_set(&pool, &cfg, 50, true).unwrap());
        assert_eq!(a.to_jsonl().unwrap(), b.to_jsonl().unwrap());
        for ep in a.iter() {
            ep.check(&cfg).unwrap();
        }
    }

    #[test]
    fn stats_single_episode() {
        let ep = Episode {
            episode_id: 0,
            active_types: vec!["A".into(), "B".into()],
            support: vec![doc("s", "E", &["A", "A", "B"])],
            query: vec![doc("q", "E", &["A"])],
        };
        let stats = episode_stats(&EpisodeSet { episodes: vec![ep] }).unwrap();
        assert_eq!(stats.micro_avg_args, 3.0);
        assert_eq!(stats.macro_avg_args, 3.0);
        assert_eq!(stats.mean_k_shot, 1.5);
        assert_eq!(
            stats.k_shot_histogram,
            [(1, 1), (2, 1)].into_iter().collect()
        );
        assert!(episode_stats(&EpisodeSet::default()).is_err());
    }

    #[test]
    fn episode_file_round_trip() {
        let pool = Corpus::new(vec![
            doc("d1", "E", &["A", "B"]),
            doc("d2", "E", &["B", "C"]),
            doc("d3", "E", &["A"]),
            doc("d4", "E", &["C"]),
        ])
        .unwrap();
        let (set, _) = generate_episode_set(&pool, &SamplerConfig::new(1, 1, 5), 8, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("episodes.jsonl");
        set.write(&path).unwrap();
        let back = EpisodeSet::read(&path).unwrap();
        assert_eq!(back, set);
        let line = set.to_jsonl().unwrap();
        let first: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
        for key in ["episode_id", "active_types", "support", "query"] {
            assert!(first.get(key).is_some(), "missing {key}");
        }
    }
}
