//! Episodic training of the toy encoder (and the nearest-neighbour reducer)
//! with a softmax cross-entropy over negative distances, plus prediction and
//! evaluation of trained or external encoders.

mod checkpoint;
mod graph;
mod model;
mod optim;

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::encoder::{project_reduce, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::evaluation::{aggregate, encode_spans, EpisodeScore, EvalReport, MacroMode};
use crate::heads::{
    compute_prototypes, mnav_classify, mnav_prototypes, nnshot_classify, protonet_classify,
    HeadKind, LabeledDoc, PrototypeSet, DEFAULT_NOTA_CLUSTERS, MAX_NOTA_CLUSTERS,
};
use crate::rng;
use crate::sampler::{sample_episode, Episode, EpisodeSet, PoolIndex, SamplerConfig};

pub use checkpoint::{
    Checkpoint, CheckpointMeta, ValidationPoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use graph::{
    check_gradients, episode_loss, loss, loss_and_distance_grad, loss_and_gradients,
    nota_centroids, relative_error, DocInput, EpisodeInput, GradCheck, Gradients, LossHead,
};
pub use model::{Model, ModelConfig, DEFAULT_BUCKETS, DEFAULT_CHUNK_LENGTH, DEFAULT_REDUCED_DIM};
pub use optim::{clip_global_norm, Optimizer, OptimizerConfig, OptimizerKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub episodes: u64,
    pub validate_every: u64,
    /// Episodes whose gradients are averaged per update.
    pub batch_size: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub optim: OptimizerConfig,
    pub nota_clusters: usize,
    pub macro_mode: MacroMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 30_000,
            validate_every: 4_000,
            batch_size: 2,
            seed: 0,
            optim: OptimizerConfig::default(),
            nota_clusters: DEFAULT_NOTA_CLUSTERS,
            macro_mode: MacroMode::Global,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optim.validate()?;
        if self.batch_size == 0 || self.validate_every == 0 {
            return Err(Error::Config(
                "batch_size and validate_every must be >= 1".into(),
            ));
        }
        if self.episodes > 0 && self.validate_every > self.episodes {
            return Err(Error::Config(format!(
                "validate_every ({}) exceeds episodes ({})",
                self.validate_every, self.episodes
            )));
        }
        if !(1..=MAX_NOTA_CLUSTERS).contains(&self.nota_clusters) {
            return Err(Error::Config(format!(
                "nota_clusters must be in 1..={MAX_NOTA_CLUSTERS}"
            )));
        }
        Ok(())
    }
}

/// Seed of the NOTA clustering for one episode.
pub fn kmeans_seed(seed: u64, episode_id: u64) -> u64 {
    rng::derive_seed(seed ^ episode_id.rotate_left(29), rng::KMEANS)
}

fn labeled_docs<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    reducer: Option<&Array2<f64>>,
    docs: &[Document],
    active_types: &[String],
) -> Result<Vec<LabeledDoc>> {
    docs.iter()
        .map(|d| {
            let mut m = provider.embed(d)?;
            if let Some(r) = reducer {
                m = project_reduce(&m, r)?;
            }
            LabeledDoc::new(m, encode_spans(&d.arguments, d.len(), active_types))
        })
        .collect()
}

fn reducer_for(head: HeadKind, reducer: Option<&Array2<f64>>) -> Result<Option<&Array2<f64>>> {
    match (head, reducer) {
        (HeadKind::Nnshot, None) => Err(Error::Config("the nnshot head requires a reducer".into())),
        (HeadKind::Nnshot, r) => Ok(r),
        _ => Ok(None),
    }
}

/// Prototypes the head would use for `episode` (class means in the reduced
/// space for the nearest-neighbour head).
pub fn episode_prototypes<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    reducer: Option<&Array2<f64>>,
    head: HeadKind,
    nota_clusters: usize,
    seed: u64,
    episode: &Episode,
) -> Result<PrototypeSet> {
    let reducer = reducer_for(head, reducer)?;
    let support = labeled_docs(provider, reducer, &episode.support, &episode.active_types)?;
    match head {
        HeadKind::Mnav => mnav_prototypes(
            &support,
            &episode.active_types,
            nota_clusters,
            kmeans_seed(seed, episode.episode_id),
        ),
        _ => compute_prototypes(&support, &episode.active_types),
    }
}

/// Predicted class labels for every query document of `episode`.
pub fn predict_episode<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    reducer: Option<&Array2<f64>>,
    head: HeadKind,
    nota_clusters: usize,
    seed: u64,
    episode: &Episode,
) -> Result<Vec<Vec<usize>>> {
    let reducer = reducer_for(head, reducer)?;
    let types = &episode.active_types;
    let support = labeled_docs(provider, reducer, &episode.support, types)?;
    let queries = labeled_docs(provider, reducer, &episode.query, types)?;
    let protos = match head {
        HeadKind::Nnshot => None,
        HeadKind::Mnav => Some(mnav_prototypes(
            &support,
            types,
            nota_clusters,
            kmeans_seed(seed, episode.episode_id),
        )?),
        HeadKind::Protonet | HeadKind::BaselineNoFinetune => {
            Some(compute_prototypes(&support, types)?)
        }
    };
    queries
        .iter()
        .map(|q| {
            let assignment = match (&protos, head) {
                (None, _) => nnshot_classify(&support, types.len(), &q.embeddings)?,
                (Some(p), HeadKind::Mnav) => mnav_classify(p, &q.embeddings)?,
                (Some(p), _) => protonet_classify(p, &q.embeddings)?,
            };
            Ok(assignment.labels)
        })
        .collect()
}

/// Scores every episode (in parallel, results in episode order) and aggregates.
pub fn evaluate<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    reducer: Option<&Array2<f64>>,
    head: HeadKind,
    nota_clusters: usize,
    seed: u64,
    episodes: &EpisodeSet,
    mode: MacroMode,
) -> Result<(EvalReport, Vec<EpisodeScore>)> {
    let scores = episodes
        .episodes
        .par_iter()
        .map(|e| {
            let pred = predict_episode(provider, reducer, head, nota_clusters, seed, e)?;
            Ok(EpisodeScore::from_predictions(
                &pred,
                &e.query,
                &e.active_types,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((aggregate(&scores, mode)?, scores))
}

/// Evaluates a toy-encoder model with its own reducer.
pub fn evaluate_model(
    model: &Model,
    head: HeadKind,
    cfg: &TrainConfig,
    episodes: &EpisodeSet,
) -> Result<(EvalReport, Vec<EpisodeScore>)> {
    evaluate(
        model,
        Some(&model.reducer),
        head,
        cfg.nota_clusters,
        cfg.seed,
        episodes,
        cfg.macro_mode,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub episode: u64,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dev_f1: Option<f64>,
}

pub fn write_log(path: &Path, log: &[LogEntry]) -> Result<()> {
    let mut out = Vec::new();
    for entry in log {
        serde_json::to_writer(&mut out, entry)?;
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the best dev macro-F1 (the final ones without a dev set).
    pub checkpoint: Checkpoint,
    pub log: Vec<LogEntry>,
}

/// Loss head used when training `head` on `input`.
pub fn loss_head(
    model: &Model,
    input: &EpisodeInput,
    head: HeadKind,
    cfg: &TrainConfig,
    episode_id: u64,
) -> Result<LossHead> {
    Ok(match head {
        HeadKind::Nnshot => LossHead::NearestNeighbour,
        HeadKind::Mnav => LossHead::MultiNota(nota_centroids(
            model,
            input,
            cfg.nota_clusters,
            kmeans_seed(cfg.seed, episode_id),
        )?),
        HeadKind::Protonet | HeadKind::BaselineNoFinetune => LossHead::Prototype,
    })
}

/// Samples training episodes from `pool` and updates `model` every
/// `batch_size` episodes. With a dev set, validates every `validate_every`
/// episodes and after the last one, keeping the earliest best checkpoint.
pub fn train(
    model: Model,
    model_cfg: &ModelConfig,
    pool: &PoolIndex<'_>,
    sampler: &SamplerConfig,
    cfg: &TrainConfig,
    head: HeadKind,
    dev: Option<&EpisodeSet>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    sampler.validate()?;
    let meta = |episode, history: Vec<ValidationPoint>| CheckpointMeta {
        model: model_cfg.clone(),
        vocab: model.encoder.vocab.clone(),
        head,
        train: *cfg,
        episode,
        history,
    };
    let episodes = if head.needs_training() {
        cfg.episodes
    } else {
        0
    };
    let mut current = model.clone();
    let mut optimizer = Optimizer::new(cfg.optim);
    let mut history = Vec::new();
    let mut log = Vec::new();
    let mut best: Option<(f64, u64, Model)> = None;
    let mut done = 0u64;
    while done < episodes {
        let end = (done + cfg.batch_size as u64).min(episodes);
        let results = (done..end)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng::substream(sampler.seed, rng::SAMPLER, i);
                let episode = sample_episode(pool, sampler, &mut rng, i, None)?;
                let input = EpisodeInput::new(&current, &episode);
                let head = loss_head(&current, &input, head, cfg, i)?;
                loss_and_gradients(&current, &input, &head)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| match e {
                Error::Numerical(m) => {
                    Error::Numerical(format!("training diverged before episode {end}: {m}"))
                }
                other => other,
            })?;
        let mut grads = Gradients::zeros(&current);
        let mut loss_sum = 0.0;
        for (l, g) in &results {
            loss_sum += l;
            grads.add(g);
        }
        let n = results.len() as f64;
        grads.scale(1.0 / n);
        let batch_loss = loss_sum / n;
        if !batch_loss.is_finite() {
            return Err(Error::Numerical(format!("loss diverged at episode {end}")));
        }
        optimizer.step(&mut current, &mut grads, head == HeadKind::Nnshot)?;
        let prev = done;
        done = end;

        let mut dev_f1 = None;
        if let Some(dev) = dev.filter(|d| !d.is_empty()) {
            let crossed = prev / cfg.validate_every < done / cfg.validate_every;
            if crossed || done == episodes {
                let (report, _) = evaluate_model(&current, head, cfg, dev)?;
                let f1 = report.macro_scores.f1;
                history.push(ValidationPoint {
                    episode: done,
                    dev_f1: f1,
                });
                dev_f1 = Some(f1);
                if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
                    best = Some((f1, done, current.clone()));
                }
                log::info!("episode {done}: loss {batch_loss:.5}, dev macro-F1 {f1:.2}");
            }
        }
        log.push(LogEntry {
            episode: done,
            loss: batch_loss,
            dev_f1,
        });
    }
    let (chosen, at) = match best {
        Some((_, at, m)) => (m, at),
        None => (current, done),
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            model: chosen,
            meta: meta(at, history),
        },
        log,
    })
}
