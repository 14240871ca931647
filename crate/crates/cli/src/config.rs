use std::path::{Path, PathBuf};

use episodic_eae::corpus::SplitKind;
use episodic_eae::heads::HeadKind;
use episodic_eae::rng;
use episodic_eae::sampler::SamplerConfig;
use episodic_eae::trainer::{ModelConfig, TrainConfig};
use episodic_eae::{Error, Result};
use serde::{Deserialize, Serialize};

/// Where token embeddings come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum EmbeddingSource {
    Toy,
    External { path: PathBuf },
}

/// Pool an episode file or export is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Dev,
    Test,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Dev => "dev",
            Partition::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub corpus: PathBuf,
    /// Explicit split assignment; a random preset of `split` is used when absent.
    pub split_spec: Option<PathBuf>,
    pub split: SplitKind,
    /// Event and argument types with fewer examples are dropped from each pool.
    pub min_type_count: usize,
    pub sampler: SamplerConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub head: HeadKind,
    pub embeddings: EmbeddingSource,
    pub out: PathBuf,
    pub seed: u64,
    pub dev_episodes: usize,
    pub test_episodes: usize,
    /// Training episodes summarised by `sample` (0 skips them).
    pub stats_episodes: usize,
    pub balance: bool,
    /// Checkpoint for `eval` and the exports; defaults to the one `train` writes.
    pub checkpoint: Option<PathBuf>,
    pub partition: Partition,
    /// Episodes whose prototypes `export-prototypes` writes.
    pub export_limit: usize,
    /// Worker threads (0 = one per core).
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: PathBuf::from("corpus.jsonl"),
            split_spec: None,
            split: SplitKind::InDomainSmall,
            min_type_count: 0,
            sampler: SamplerConfig::new(3, 1, 0),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            head: HeadKind::Protonet,
            embeddings: EmbeddingSource::Toy,
            out: PathBuf::from("runs"),
            seed: 0,
            dev_episodes: 500,
            test_episodes: 1000,
            stats_episodes: 1000,
            balance: true,
            checkpoint: None,
            partition: Partition::Test,
            export_limit: 10,
            workers: 0,
        }
    }
}

/// Scalar overrides given on the command line.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// JSON run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub n_ways: Option<usize>,
    #[arg(long, global = true)]
    pub d_docs: Option<usize>,
    /// baseline_no_finetune | protonet | nnshot | mnav
    #[arg(long, global = true)]
    pub head: Option<HeadKind>,
    /// in_domain_small | in_domain_base | cross_domain | custom
    #[arg(long, global = true)]
    pub split: Option<SplitKind>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Training episodes
    #[arg(long, global = true)]
    pub episodes: Option<u64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub partition: Option<Partition>,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Reads the config file (if any) and applies the overrides. The run seed
    /// is copied into the sampler and trainer settings.
    pub fn resolve(o: &Overrides) -> Result<Self> {
        let mut cfg = match &o.config {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(v) = o.seed {
            cfg.seed = v;
        }
        if let Some(v) = o.n_ways {
            cfg.sampler.n_ways = v;
        }
        if let Some(v) = o.d_docs {
            cfg.sampler.d_docs = v;
        }
        if let Some(v) = o.head {
            cfg.head = v;
        }
        if let Some(v) = o.split {
            cfg.split = v;
        }
        if let Some(v) = &o.out {
            cfg.out = v.clone();
        }
        if let Some(v) = o.episodes {
            cfg.train.episodes = v;
        }
        if let Some(v) = o.workers {
            cfg.workers = v;
        }
        if let Some(v) = &o.corpus {
            cfg.corpus = v.clone();
        }
        if let Some(v) = o.partition {
            cfg.partition = v;
        }
        if let Some(v) = &o.checkpoint {
            cfg.checkpoint = Some(v.clone());
        }
        cfg.sampler.seed = cfg.seed;
        cfg.train.seed = cfg.seed;
        cfg.sampler.validate()?;
        cfg.model.validate()?;
        Ok(cfg)
    }

    pub fn setting(&self) -> String {
        self.sampler.setting()
    }

    /// Sampler settings for one pool, on its own seed stream.
    pub fn sampler_for(&self, partition: Partition) -> SamplerConfig {
        SamplerConfig {
            seed: rng::derive_seed(
                self.seed,
                &format!("{}/{}", rng::SAMPLER, partition.as_str()),
            ),
            ..self.sampler
        }
    }

    pub fn episodes_path(&self, partition: Partition) -> PathBuf {
        self.out.join(format!(
            "episodes_{}_{}.jsonl",
            partition.as_str(),
            self.setting()
        ))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| {
            self.out.join(format!(
                "checkpoint_{}_{}.fdck",
                self.head.as_str(),
                self.setting()
            ))
        })
    }

    pub fn report_path(&self) -> PathBuf {
        self.out.join(format!(
            "report_{}_{}_{}_seed{}.json",
            self.head.as_str(),
            self.setting(),
            self.partition.as_str(),
            self.seed
        ))
    }

    pub fn require_file(path: &Path, what: &str) -> Result<()> {
        if path.is_file() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{what} {} does not exist",
                path.display()
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_overrides_apply() {
        let cfg = RunConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), cfg);
        let o = Overrides {
            seed: Some(9),
            n_ways: Some(6),
            d_docs: Some(2),
            head: Some(HeadKind::Mnav),
            episodes: Some(10),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&o).unwrap();
        assert_eq!(cfg.setting(), "6w2d");
        assert_eq!((cfg.sampler.seed, cfg.train.seed), (9, 9));
        assert_eq!(cfg.train.episodes, 10);
        assert_ne!(
            cfg.sampler_for(Partition::Dev).seed,
            cfg.sampler_for(Partition::Test).seed
        );
    }

    #[test]
    fn partial_config_uses_defaults() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"corpus": "c.jsonl", "embeddings": {"source": "external", "path": "e.fdae"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.corpus, PathBuf::from("c.jsonl"));
        assert_eq!(
            cfg.embeddings,
            EmbeddingSource::External {
                path: "e.fdae".into()
            }
        );
        assert_eq!(cfg.dev_episodes, 500);
    }

    #[test]
    fn invalid_setting_is_a_config_error() {
        let o = Overrides {
            n_ways: Some(0),
            ..Default::default()
        };
        assert_eq!(
            RunConfig::resolve(&o).unwrap_err().kind(),
            episodic_eae::ErrorKind::Config
        );
    }
}
