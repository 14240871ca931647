use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use episodic_eae::corpus::{
    apply_leakage_mask, compute_split, filter_split, parse_corpus, write_corpus, Corpus,
    CorpusStats, MaskingReport, SplitCorpus, SplitSpec,
};
use episodic_eae::encoder::{
    load_external_embeddings, write_external_embeddings, EmbeddingProvider, ExternalEmbeddings,
};
use episodic_eae::evaluation::{render_table, Report};
use episodic_eae::heads::HeadKind;
use episodic_eae::rng;
use episodic_eae::sampler::{episode_stats, generate_episode_set, EpisodeSet, PoolIndex};
use episodic_eae::synthetic::{
    calibrated_corpus, random_corpus, separable_corpus, CalibratedCorpusConfig, RandomCorpusConfig,
    SeparableConfig,
};
use episodic_eae::trainer::{episode_prototypes, evaluate, train, write_log, Checkpoint, Model};
use episodic_eae::{Error, Result};
use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{EmbeddingSource, Partition, RunConfig};

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    seed: u64,
    config: &'a RunConfig,
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

/// Writes `<artifact>.meta.json` with the command, seed and full config.
fn write_meta(artifact: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".meta.json");
    write_json(
        Path::new(&name),
        &Meta {
            command,
            seed: cfg.seed,
            config: cfg,
        },
    )
}

fn ensure_out(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))
}

fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    RunConfig::require_file(&cfg.corpus, "corpus")?;
    parse_corpus(&cfg.corpus)
}

fn split_spec(cfg: &RunConfig, corpus: &Corpus) -> Result<SplitSpec> {
    match &cfg.split_spec {
        Some(path) => {
            RunConfig::require_file(path, "split spec")?;
            SplitSpec::load(path)
        }
        None => {
            let types: Vec<&str> = corpus.event_types().into_iter().collect();
            let mut rng = rng::substream(cfg.seed, rng::SHUFFLE, 0);
            SplitSpec::preset(cfg.split, &types, &mut rng)
        }
    }
}

struct Prepared {
    spec: SplitSpec,
    split: SplitCorpus,
    masked: MaskingReport,
}

/// Corpus -> split -> leakage mask -> rare-type filter.
fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let corpus = load_corpus(cfg)?;
    let spec = split_spec(cfg, &corpus)?;
    let split = compute_split(&corpus, &spec)?;
    let (mut split, masked) = apply_leakage_mask(&split, &spec);
    if cfg.min_type_count > 0 {
        split = filter_split(&split, cfg.min_type_count);
    }
    Ok(Prepared {
        spec,
        split,
        masked,
    })
}

fn pool(split: &SplitCorpus, partition: Partition) -> &Corpus {
    match partition {
        Partition::Train => &split.train,
        Partition::Dev => &split.dev,
        Partition::Test => &split.test,
    }
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(cfg)?;
    ensure_out(cfg)?;
    let stats = corpus.stats();
    let path = cfg.out.join("corpus_stats.json");
    write_json(&path, &stats)?;
    write_meta(&path, "ingest", cfg)?;
    println!("{}", serde_json::to_string(&stats)?);
    Ok(())
}

#[derive(Serialize)]
struct SplitSummary<'a> {
    spec: &'a SplitSpec,
    pools: BTreeMap<&'static str, CorpusStats>,
    unassigned: usize,
    masked: &'a MaskingReport,
}

pub fn split(cfg: &RunConfig) -> Result<()> {
    let p = prepare(cfg)?;
    ensure_out(cfg)?;
    let spec_path = cfg.out.join("split_spec.json");
    write_json(&spec_path, &p.spec)?;
    write_meta(&spec_path, "split", cfg)?;
    for (name, corpus) in p.split.pools() {
        let path = cfg.out.join(format!("pool_{name}.jsonl"));
        write_corpus(&path, corpus.docs())?;
        write_meta(&path, "split", cfg)?;
    }
    let summary = SplitSummary {
        spec: &p.spec,
        pools: p
            .split
            .pools()
            .into_iter()
            .map(|(n, c)| (n, c.stats()))
            .collect(),
        unassigned: p.split.unassigned,
        masked: &p.masked,
    };
    let path = cfg.out.join("split_report.json");
    write_json(&path, &summary)?;
    write_meta(&path, "split", cfg)?;
    println!(
        "train {} / dev {} / test {} documents, {} unassigned, {} spans masked",
        p.split.train.len(),
        p.split.dev.len(),
        p.split.test.len(),
        p.split.unassigned,
        p.masked.total()
    );
    Ok(())
}

pub fn sample(cfg: &RunConfig) -> Result<()> {
    let p = prepare(cfg)?;
    ensure_out(cfg)?;
    let mut stats = BTreeMap::new();
    if cfg.stats_episodes > 0 {
        // the exact episodes `train` draws first
        let (set, _) = generate_episode_set(
            &p.split.train,
            &cfg.sampler_for(Partition::Train),
            cfg.stats_episodes,
            false,
        )?;
        stats.insert("train", episode_stats(&set)?);
    }
    for (partition, count) in [
        (Partition::Dev, cfg.dev_episodes),
        (Partition::Test, cfg.test_episodes),
    ] {
        if count == 0 {
            continue;
        }
        let (set, warnings) = generate_episode_set(
            pool(&p.split, partition),
            &cfg.sampler_for(partition),
            count,
            cfg.balance,
        )?;
        let path = cfg.episodes_path(partition);
        set.write(&path)?;
        write_meta(&path, "sample", cfg)?;
        stats.insert(partition.as_str(), episode_stats(&set)?);
        println!(
            "{}: {} episodes ({} warnings) -> {}",
            partition.as_str(),
            set.len(),
            warnings.len(),
            path.display()
        );
    }
    let path = cfg
        .out
        .join(format!("episode_stats_{}.json", cfg.setting()));
    write_json(&path, &stats)?;
    write_meta(&path, "sample", cfg)?;
    Ok(())
}

fn fresh_model(cfg: &RunConfig, train_pool: &Corpus) -> Result<Model> {
    let vocab = cfg.model.vocabulary(train_pool.iter());
    Model::init(&cfg.model, vocab, cfg.seed)
}

fn read_episodes(cfg: &RunConfig, partition: Partition) -> Result<EpisodeSet> {
    let path = cfg.episodes_path(partition);
    RunConfig::require_file(&path, "episode file")?;
    EpisodeSet::read(&path)
}

pub fn train_cmd(cfg: &RunConfig) -> Result<()> {
    if cfg.embeddings != EmbeddingSource::Toy {
        return Err(Error::Config(
            "training needs the toy encoder; external embeddings are fixed".into(),
        ));
    }
    let p = prepare(cfg)?;
    ensure_out(cfg)?;
    let model = fresh_model(cfg, &p.split.train)?;
    let dev_path = cfg.episodes_path(Partition::Dev);
    let dev = if dev_path.is_file() {
        EpisodeSet::read(&dev_path)?
    } else if cfg.dev_episodes > 0 && !p.split.dev.is_empty() {
        generate_episode_set(
            &p.split.dev,
            &cfg.sampler_for(Partition::Dev),
            cfg.dev_episodes,
            cfg.balance,
        )?
        .0
    } else {
        EpisodeSet::default()
    };
    let index = PoolIndex::new(&p.split.train);
    let outcome = train(
        model,
        &cfg.model,
        &index,
        &cfg.sampler_for(Partition::Train),
        &cfg.train,
        cfg.head,
        Some(&dev),
    )?;
    let ckpt = cfg.checkpoint_path();
    outcome.checkpoint.save(&ckpt)?;
    write_meta(&ckpt, "train", cfg)?;
    let log_path = cfg.out.join(format!(
        "train_log_{}_{}.jsonl",
        cfg.head.as_str(),
        cfg.setting()
    ));
    write_log(&log_path, &outcome.log)?;
    write_meta(&log_path, "train", cfg)?;
    match outcome.checkpoint.best_dev_f1() {
        Some(f1) => println!(
            "kept episode {} (dev macro-F1 {f1:.2}) -> {}",
            outcome.checkpoint.meta.episode,
            ckpt.display()
        ),
        None => println!(
            "saved episode {} -> {}",
            outcome.checkpoint.meta.episode,
            ckpt.display()
        ),
    }
    Ok(())
}

/// The embedding source of a run plus the checkpoint (if any) backing it.
enum Source {
    Toy(Model),
    External(ExternalEmbeddings, Option<Checkpoint>),
}

fn load_checkpoint(cfg: &RunConfig) -> Result<Option<Checkpoint>> {
    let path = cfg.checkpoint_path();
    if path.is_file() {
        Checkpoint::load(&path).map(Some)
    } else if cfg.checkpoint.is_some() {
        Err(Error::Config(format!(
            "checkpoint {} does not exist",
            path.display()
        )))
    } else {
        Ok(None)
    }
}

fn load_source(cfg: &RunConfig) -> Result<Source> {
    let ckpt = load_checkpoint(cfg)?;
    match &cfg.embeddings {
        EmbeddingSource::Toy => match ckpt {
            Some(c) => Ok(Source::Toy(c.model)),
            None if cfg.head == HeadKind::BaselineNoFinetune => {
                let p = prepare(cfg)?;
                Ok(Source::Toy(fresh_model(cfg, &p.split.train)?))
            }
            None => Err(Error::Config(format!(
                "no checkpoint at {}; run `train` first",
                cfg.checkpoint_path().display()
            ))),
        },
        EmbeddingSource::External { path } => {
            RunConfig::require_file(path, "external embeddings")?;
            let ext = load_external_embeddings(path, None)?;
            if cfg.head == HeadKind::Nnshot {
                match &ckpt {
                    Some(c) if c.model.reducer.nrows() == ext.d_model() => {}
                    Some(c) => {
                        return Err(Error::DimensionMismatch {
                            expected: ext.d_model(),
                            found: c.model.reducer.nrows(),
                        })
                    }
                    None => {
                        return Err(Error::Config(
                            "the nnshot head requires a reducer from a checkpoint".into(),
                        ))
                    }
                }
            }
            Ok(Source::External(ext, ckpt))
        }
    }
}

impl Source {
    fn parts(&self) -> (&dyn EmbeddingProvider, Option<&Array2<f64>>) {
        match self {
            Source::Toy(m) => (m, Some(&m.reducer)),
            Source::External(e, c) => (e, c.as_ref().map(|c| &c.model.reducer)),
        }
    }
}

fn split_name(cfg: &RunConfig) -> Result<String> {
    Ok(match &cfg.split_spec {
        Some(p) => SplitSpec::load(p)?.name.as_str().to_string(),
        None => cfg.split.as_str().to_string(),
    })
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let episodes = read_episodes(cfg, cfg.partition)?;
    let source = load_source(cfg)?;
    let (provider, reducer) = source.parts();
    let (eval, _) = evaluate(
        provider,
        reducer,
        cfg.head,
        cfg.train.nota_clusters,
        cfg.seed,
        &episodes,
        cfg.train.macro_mode,
    )?;
    ensure_out(cfg)?;
    let report = Report {
        setting: cfg.setting(),
        split: split_name(cfg)?,
        model: cfg.head.display_name().to_string(),
        seed: cfg.seed,
        eval,
    };
    let path = cfg.report_path();
    report.write(&path)?;
    write_meta(&path, "eval", cfg)?;
    let m = &report.eval.macro_scores;
    println!(
        "{} {} {}: P {:.2} R {:.2} F1 {:.2} over {} episodes",
        report.model,
        report.setting,
        cfg.partition.as_str(),
        m.p,
        m.r,
        m.f1,
        report.eval.episode_count
    );
    Ok(())
}

pub fn report(cfg: &RunConfig) -> Result<()> {
    let suffix = format!("_{}_seed", cfg.partition.as_str());
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&cfg.out)
        .map_err(|e| Error::io(&cfg.out, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("report_")
                && name.contains(&suffix)
                && name.ends_with(".json")
                && !name.ends_with(".meta.json")
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!(
            "no {} reports in {}",
            cfg.partition.as_str(),
            cfg.out.display()
        )));
    }
    let reports = paths
        .iter()
        .map(|p| Report::read(p))
        .collect::<Result<Vec<_>>>()?;
    let table = render_table(&reports);
    let path = cfg
        .out
        .join(format!("table_{}.txt", cfg.partition.as_str()));
    std::fs::write(&path, &table).map_err(|e| Error::io(&path, e))?;
    write_meta(&path, "report", cfg)?;
    print!("{table}");
    Ok(())
}

pub fn export_embeddings(cfg: &RunConfig) -> Result<()> {
    let model = match load_source(cfg)? {
        Source::Toy(m) => m,
        Source::External(..) => {
            return Err(Error::Config(
                "export-embeddings writes toy-encoder embeddings".into(),
            ))
        }
    };
    let p = prepare(cfg)?;
    let docs = pool(&p.split, cfg.partition).docs();
    let matrices = docs
        .par_iter()
        .map(|d| model.embed(d))
        .collect::<Result<Vec<_>>>()?;
    ensure_out(cfg)?;
    let path = cfg
        .out
        .join(format!("embeddings_{}.fdae", cfg.partition.as_str()));
    write_external_embeddings(&path, &matrices)?;
    write_meta(&path, "export-embeddings", cfg)?;
    println!("{} documents -> {}", matrices.len(), path.display());
    Ok(())
}

pub fn export_prototypes(cfg: &RunConfig) -> Result<()> {
    let episodes = read_episodes(cfg, cfg.partition)?;
    let source = load_source(cfg)?;
    let (provider, reducer) = source.parts();
    let dir = cfg.out.join(format!(
        "prototypes_{}_{}_{}",
        cfg.head.as_str(),
        cfg.setting(),
        cfg.partition.as_str()
    ));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let chosen: Vec<_> = episodes.iter().take(cfg.export_limit).collect();
    for ep in &chosen {
        let protos = episode_prototypes(
            provider,
            reducer,
            cfg.head,
            cfg.train.nota_clusters,
            cfg.seed,
            ep,
        )?;
        protos.write_csv(&dir.join(format!("episode_{:06}.csv", ep.episode_id)))?;
    }
    write_meta(&dir, "export-prototypes", cfg)?;
    println!("{} episodes -> {}", chosen.len(), dir.display());
    Ok(())
}

/// Synthetic corpus families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKind {
    Random,
    Calibrated,
    Separable,
}

/// Writes a synthetic corpus to `cfg.corpus` (and a split spec for the
/// separable family, whose split is fixed by construction).
pub fn synth(cfg: &RunConfig, kind: SynthKind, docs: Option<usize>) -> Result<()> {
    let (corpus, spec) = match kind {
        SynthKind::Random => {
            let mut c = RandomCorpusConfig::default();
            c.num_docs = docs.unwrap_or(c.num_docs);
            (random_corpus(&c, cfg.seed), None)
        }
        SynthKind::Calibrated => {
            let mut c = CalibratedCorpusConfig::default();
            c.num_docs = docs.unwrap_or(c.num_docs);
            (calibrated_corpus(&c, cfg.seed), None)
        }
        SynthKind::Separable => {
            let mut c = SeparableConfig::default();
            c.docs_per_event = docs.unwrap_or(c.docs_per_event);
            let (corpus, spec) = separable_corpus(&c, cfg.seed);
            (corpus, Some(spec))
        }
    };
    if let Some(parent) = cfg.corpus.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_corpus(&cfg.corpus, corpus.docs())?;
    println!("{} documents -> {}", corpus.len(), cfg.corpus.display());
    if let Some(spec) = spec {
        let path = cfg
            .split_spec
            .clone()
            .unwrap_or_else(|| cfg.corpus.with_extension("split.json"));
        write_json(&path, &spec)?;
        println!("split spec -> {}", path.display());
    }
    Ok(())
}
